"""Closed-form data-averaged quantities for the delayed-pair GP.

Everything here averages over data drawn from a *true* joint covariance
``K`` while the likelihood uses a *model* covariance ``K_theta``. All
log-determinants go through Cholesky factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gp import LOGZERO, HyperParams, ObservationGrid, _auto_block, build_joint_covariance

__all__ = [
    "AveragedLogLik",
    "SpectrumReport",
    "averaged_loglik",
    "regularised_averaged_loglik",
    "averaged_loglik_scan",
    "averaged_likelihood_moments",
    "zero_delay_moments",
    "large_delay_moments",
    "bayes_factor_spectrum",
    "bayes_factor_matrix",
    "largescale_length_loglik",
    "condition_number",
    "condition_number_scan",
]

LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class AveragedLogLik:
    e_loglik: float
    var_exact: float
    var_elementwise: float

    @property
    def sd_exact(self) -> float:
        return math.sqrt(self.var_exact) if self.var_exact >= 0 else math.nan

    @property
    def sd_elementwise(self) -> float:
        return math.sqrt(self.var_elementwise) if self.var_elementwise >= 0 else math.nan


_IMPOSSIBLE = AveragedLogLik(LOGZERO, LOGZERO, LOGZERO)


@dataclass(frozen=True)
class SpectrumReport:
    rho: np.ndarray
    min_rho: float
    is_positive_definite: bool


def _chol(matrix):
    try:
        c = linalg.cholesky(matrix, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    d = np.diag(c)
    return c if np.all(d > 0) else None


def _logdet(chol):
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _averaged(chol, k_true, with_elementwise=True):
    n = k_true.shape[0]
    m = linalg.cho_solve((chol, True), k_true, check_finite=False)
    e = -0.5 * float(np.trace(m)) - 0.5 * (_logdet(chol) + n * LOG2PI)
    var_exact = 0.5 * float(np.sum(m * m.T))
    var_elementwise = math.nan
    if with_elementwise:
        inv = linalg.cho_solve((chol, True), np.eye(n), check_finite=False)
        d = np.diag(k_true)
        var_elementwise = 0.25 * float(np.sum(inv * (np.outer(d, d) + k_true.T**2)))
    return AveragedLogLik(e, var_exact, var_elementwise), m


def averaged_loglik(grid: ObservationGrid, theta_model: HyperParams,
                    theta_true: HyperParams) -> AveragedLogLik:
    """Mean and variance of the log-likelihood over data from ``theta_true``.

    ``var_exact`` is ``0.5 tr[(K_theta^-1 K)^2]``, the variance of a
    Gaussian quadratic form; ``var_elementwise`` is
    ``0.25 sum_ij (K_theta^-1)_ij (K_ii K_jj + K_ji^2)``, kept for comparison.
    """
    chol = _chol(build_joint_covariance(grid, theta_model))
    if chol is None:
        return _IMPOSSIBLE
    out, _ = _averaged(chol, build_joint_covariance(grid, theta_true))
    return out


def _decorrelated_cov(grid, theta_true, decorrelated_delay):
    if decorrelated_delay is None:
        k = build_joint_covariance(grid, theta_true)
        n = grid.n_data
        k[:n, n:] = 0.0
        k[n:, :n] = 0.0
        return k
    return build_joint_covariance(grid, theta_true.with_delay(decorrelated_delay))


def regularised_averaged_loglik(grid: ObservationGrid, delay: float, theta_base: HyperParams,
                                theta_true: HyperParams, decorrelated_delay="t_range") -> float:
    """Averaged log-likelihood minus that of fictitious decorrelated data.

    The subtracted term uses the same model covariance (at ``delay``) but a
    true covariance whose delay is ``decorrelated_delay`` (default: the
    grid's ``t_range``). Pass ``None`` to zero the cross blocks instead.
    """
    if decorrelated_delay == "t_range":
        decorrelated_delay = grid.t_range
    chol = _chol(build_joint_covariance(grid, theta_base.with_delay(delay)))
    if chol is None:
        return LOGZERO
    diff = build_joint_covariance(grid, theta_true) - _decorrelated_cov(
        grid, theta_true, decorrelated_delay)
    return -0.5 * float(np.trace(linalg.cho_solve((chol, True), diff, check_finite=False)))


def averaged_loglik_scan(grid: ObservationGrid, theta_base: HyperParams,
                         theta_true: HyperParams, delays, decorrelated_delay="t_range",
                         with_elementwise: bool = True) -> dict:
    """Delay scan of the averaged log-likelihood, its spreads and the regularised form.

    Returns a dict of arrays keyed like the scan CSV columns:
    ``delta_t, e_loglik, sd_exact, sd_elementwise, e_loglik_reg``.
    """
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        raise ValueError("empty delay grid")
    if decorrelated_delay == "t_range":
        decorrelated_delay = grid.t_range
    k_true = build_joint_covariance(grid, theta_true)
    k_diff = k_true - _decorrelated_cov(grid, theta_true, decorrelated_delay)
    out = {key: np.full(delays.size, np.nan)
           for key in ("e_loglik", "var_exact", "var_elementwise", "e_loglik_reg")}
    for i, d in enumerate(delays):
        chol = _chol(build_joint_covariance(grid, theta_base.with_delay(d)))
        if chol is None:
            for key in out:
                out[key][i] = LOGZERO
            continue
        res, _ = _averaged(chol, k_true, with_elementwise)
        out["e_loglik"][i] = res.e_loglik
        out["var_exact"][i] = res.var_exact
        out["var_elementwise"][i] = res.var_elementwise
        out["e_loglik_reg"][i] = -0.5 * float(np.trace(
            linalg.cho_solve((chol, True), k_diff, check_finite=False)))
    with np.errstate(invalid="ignore"):
        sd_exact = np.sqrt(out["var_exact"])
        sd_elementwise = np.sqrt(out["var_elementwise"])
    return {
        "delta_t": delays,
        "e_loglik": out["e_loglik"],
        "sd_exact": sd_exact,
        "sd_elementwise": sd_elementwise,
        "e_loglik_reg": out["e_loglik_reg"],
        "var_exact": out["var_exact"],
        "var_elementwise": out["var_elementwise"],
    }


def averaged_likelihood_moments(grid: ObservationGrid, theta_model: HyperParams,
                                theta_true: HyperParams) -> tuple[float, float]:
    """``(log E[L], log E[L^2])`` over data from ``theta_true``.

    ``E[L] = |2 pi (K_theta + K)|^-1/2`` and
    ``E[L^2] = |4 pi^2 K_theta (K_theta + 2K)|^-1/2``.
    """
    k_model = build_joint_covariance(grid, theta_model)
    k_true = build_joint_covariance(grid, theta_true)
    n = k_model.shape[0]
    c1 = _chol(k_model + k_true)
    c_model = _chol(k_model)
    c2 = _chol(k_model + 2.0 * k_true)
    log_el = LOGZERO if c1 is None else -0.5 * (n * LOG2PI + _logdet(c1))
    if c_model is None or c2 is None:
        log_el2 = LOGZERO
    else:
        log_el2 = -0.5 * (n * math.log(4.0 * math.pi**2) + _logdet(c_model) + _logdet(c2))
    return log_el, log_el2


def zero_delay_moments(grid: ObservationGrid, theta: HyperParams) -> tuple[float, float]:
    """Closed forms of :func:`averaged_likelihood_moments` when model and truth share delay 0.

    With ``m`` points per curve,
    ``E[L] = (4 pi)^-m sigma^-m |2K + sigma^2 I|^-1/2`` and
    ``E[L^2] = (12 pi^2)^-m sigma^-2m |2K + sigma^2 I|^-1``.
    """
    m = grid.n_data
    s2 = theta.noise**2
    k = _auto_block(grid.times, theta) - s2 * np.eye(m)
    c = _chol(2.0 * k + s2 * np.eye(m))
    if c is None or theta.noise == 0:
        return LOGZERO, LOGZERO
    ld = _logdet(c)
    log_sigma = math.log(theta.noise)
    log_el = -m * math.log(4.0 * math.pi) - m * log_sigma - 0.5 * ld
    log_el2 = -m * math.log(12.0 * math.pi**2) - 2 * m * log_sigma - ld
    return log_el, log_el2


def large_delay_moments(grid: ObservationGrid, theta: HyperParams) -> tuple[float, float]:
    """Small-noise limits of the moments for zero true delay and a decorrelating model delay.

    ``E[L] -> (12 pi^2)^-m/2 |K|^-1`` and ``E[L^2] -> (80 pi^4)^-m/2 |K|^-2``
    for ``m`` points per curve and ``K`` the noise-free auto block.
    """
    m = grid.n_data
    k = _auto_block(grid.times, theta) - theta.noise**2 * np.eye(m)
    c = _chol(k)
    if c is None:
        return LOGZERO, LOGZERO
    ld = _logdet(c)
    return (-0.5 * m * math.log(12.0 * math.pi**2) - ld,
            -0.5 * m * math.log(80.0 * math.pi**4) - 2.0 * ld)


def bayes_factor_matrix(grid: ObservationGrid, amplitude: float, length_scale: float,
                        noise: float) -> np.ndarray:
    """``S = 3I - 2 K_0 K_inf^-1`` for delays zero and infinity."""
    theta = HyperParams(amplitude, length_scale, noise, 0.0)
    k0 = build_joint_covariance(grid, theta)
    m = grid.n_data
    auto = _auto_block(grid.times, theta)
    inv_auto = linalg.inv(auto)
    k_inf_inv = np.zeros_like(k0)
    k_inf_inv[:m, :m] = inv_auto
    k_inf_inv[m:, m:] = inv_auto
    return 3.0 * np.eye(2 * m) - 2.0 * k0 @ k_inf_inv


def bayes_factor_spectrum(grid: ObservationGrid, amplitude: float, length_scale: float,
                          noise: float) -> SpectrumReport:
    """Eigenvalues ``rho = 3 - 2 lambda`` with ``lambda = 1 +- kappa/(kappa + sigma^2)``.

    ``kappa`` are the eigenvalues of the noise-free auto block. The second
    moment of the Bayes factor between zero and infinite delay is finite
    only if every ``rho`` is positive.
    """
    theta = HyperParams(amplitude, length_scale, noise, 0.0)
    kappa = linalg.eigvalsh(_auto_block(grid.times, theta) - noise**2 * np.eye(grid.n_data))
    ratio = kappa / (kappa + noise**2)
    lam = np.concatenate([1.0 + ratio, 1.0 - ratio])
    rho = np.sort(3.0 - 2.0 * lam)
    min_rho = float(rho.min())
    return SpectrumReport(rho, min_rho, bool(min_rho > 0))


def largescale_length_loglik(length_scale, true_length_scale, spacing):
    """Large-sample log-likelihood per point of a unit-amplitude exponential kernel.

    ``a = exp(-dt/ell)``, ``b = exp(-dt/ell_true)``; returns
    ``-0.5 * ((1 + a^2 - 2ab)/(1 - a^2) + log(1 - a^2) + log 2 pi)``.
    Broadcasts over ``length_scale``.
    """
    ell = np.asarray(length_scale, dtype=float)
    if np.any(ell <= 0) or true_length_scale <= 0 or spacing <= 0:
        raise ValueError("length scales and spacing must be positive")
    if np.any(~np.isfinite(ell)):
        raise ValueError("infinite length scale is a pole of the per-point likelihood")
    a = np.exp(-spacing / ell)
    b = math.exp(-spacing / true_length_scale)
    one_m_a2 = -np.expm1(-2.0 * spacing / ell)
    out = -0.5 * ((1.0 + a * a - 2.0 * a * b) / one_m_a2 + np.log(one_m_a2) + LOG2PI)
    return float(out) if out.ndim == 0 else out


def condition_number(matrix) -> float:
    """``lambda_max / lambda_min`` of a symmetric matrix; +inf if not positive."""
    w = linalg.eigvalsh(matrix, check_finite=False)
    if w[0] <= 1e-300:
        return math.inf
    return float(w[-1] / w[0])


def condition_number_scan(grid: ObservationGrid, theta_base: HyperParams, delays):
    """Condition number of the joint covariance at each delay; list of ``(delay, cond)``."""
    return [(float(d), condition_number(build_joint_covariance(grid, theta_base.with_delay(d))))
            for d in np.asarray(delays, dtype=float)]
