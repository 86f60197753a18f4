"""Adaptive tempered sequential Monte Carlo.

Particles start from the prior at inverse temperature 0. Each stage picks
the increment by bisection so that the relative ESS of the incremental
weights ``L**dbeta`` hits a target, reweights, resamples systematically and
rejuvenates with random-walk Metropolis whose proposal covariance is the
weighted particle covariance times a fixed scale.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

from ..synth import make_rng
from .base import PriorBox, SamplerConfigError, WeightedSamples

__all__ = ["SMCConfig", "smc", "relative_ess", "systematic_resample"]


@dataclass(frozen=True)
class SMCConfig:
    n_particles: int = 1000
    target_ress: float = 0.5
    mcmc_steps: int = 5
    proposal_scale: float = 0.125
    seed: int = 0
    max_stages: int = 10_000
    bisection_tol: float = 1e-6

    def __post_init__(self):
        if self.n_particles < 2:
            raise ValueError("n_particles must be at least 2")
        if not 0 < self.target_ress < 1:
            raise ValueError("target_ress must lie in (0, 1)")
        if self.mcmc_steps < 0:
            raise ValueError("mcmc_steps must be non-negative")
        if not self.proposal_scale > 0:
            raise ValueError("proposal_scale must be positive")

    def as_dict(self) -> dict:
        return asdict(self)


def relative_ess(log_w) -> float:
    """``(sum w)**2 / (n sum w**2)`` computed in log space."""
    log_w = np.asarray(log_w, dtype=float)
    if not np.isfinite(log_w).any():
        return 0.0
    return float(math.exp(2.0 * logsumexp(log_w) - logsumexp(2.0 * log_w)) / log_w.size)


def _incremental(logl, dbeta):
    out = dbeta * logl
    return np.where(np.isfinite(logl), out, -np.inf if dbeta > 0 else 0.0)


def systematic_resample(weights, rng) -> np.ndarray:
    n = weights.size
    positions = (rng.random() + np.arange(n)) / n
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions, side="left")


def _next_increment(logl, remaining, target, tol):
    if relative_ess(_incremental(logl, remaining)) >= target:
        return remaining
    lo, hi = 0.0, remaining
    while hi - lo > tol * remaining:
        mid = 0.5 * (lo + hi)
        if relative_ess(_incremental(logl, mid)) >= target:
            lo = mid
        else:
            hi = mid
    # lo keeps rESS at or above target; guard against a zero step
    return lo if lo > 0 else hi


def _evaluate(loglik, x):
    return np.array([loglik(xi) for xi in x], dtype=float)


def smc(loglik, prior: PriorBox, cfg: SMCConfig = SMCConfig()) -> WeightedSamples:
    """Temper from prior to posterior; returns equally weighted final particles.

    ``logZ`` is the product of mean incremental weights; ``logZ_err`` is
    not estimated (NaN).
    """
    rng = make_rng(cfg.seed)
    n = cfg.n_particles
    ndim = prior.ndim
    x = prior.sample(rng, n)
    logl = _evaluate(loglik, x)
    calls = n
    if not np.isfinite(logl).any():
        raise SamplerConfigError("no particle drawn from the prior has finite likelihood")

    beta = 0.0
    log_z = 0.0
    betas = [0.0]
    ress_trace = []
    acceptance = []
    while beta < 1.0:
        if len(betas) > cfg.max_stages:
            raise RuntimeError(f"SMC did not reach beta=1 within {cfg.max_stages} stages")
        dbeta = _next_increment(logl, 1.0 - beta, cfg.target_ress, cfg.bisection_tol)
        new_beta = 1.0 if beta + dbeta >= 1.0 or dbeta == 1.0 - beta else beta + dbeta
        log_inc = _incremental(logl, new_beta - beta)
        ress_trace.append(relative_ess(log_inc))
        log_z += float(logsumexp(log_inc) - math.log(n))
        w = np.exp(log_inc - logsumexp(log_inc))
        cov = np.atleast_2d(np.cov(x, rowvar=False, aweights=w, ddof=0)) * cfg.proposal_scale
        beta = new_beta
        betas.append(beta)

        idx = systematic_resample(w, rng)
        x = x[idx]
        logl = logl[idx]

        scale = np.sqrt(np.maximum(np.diag(cov), 0.0))
        floor = 1e-12 * max(float(scale.max()), 1.0)
        try:
            chol = np.linalg.cholesky(cov + floor * np.eye(ndim))
        except np.linalg.LinAlgError:
            chol = np.diag(np.maximum(scale, floor))
        accepted = 0
        for _ in range(cfg.mcmc_steps):
            prop = x + rng.standard_normal((n, ndim)) @ chol.T
            inside = np.all((prop >= prior.lower) & (prop <= prior.upper), axis=1)
            prop_logl = np.full(n, -np.inf)
            for k in np.flatnonzero(inside):
                prop_logl[k] = loglik(prop[k])
            calls += int(inside.sum())
            with np.errstate(invalid="ignore"):
                log_ratio = beta * (prop_logl - logl)
            log_ratio = np.where(np.isfinite(prop_logl), log_ratio, -np.inf)
            log_ratio = np.where(np.isfinite(prop_logl) & ~np.isfinite(logl), 0.0, log_ratio)
            move = np.log(rng.random(n)) < log_ratio
            x[move] = prop[move]
            logl[move] = prop_logl[move]
            accepted += int(move.sum())
        if cfg.mcmc_steps:
            acceptance.append(accepted / (n * cfg.mcmc_steps))

    info = {
        "betas": betas,
        "relative_ess": ress_trace,
        "acceptance": acceptance,
        "likelihood_calls": calls,
        "stages": len(betas) - 1,
        "config": cfg.as_dict(),
    }
    return WeightedSamples(x, np.zeros(n), logl, log_z, math.nan, prior.names, info)
