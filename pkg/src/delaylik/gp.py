"""Time-delayed Gaussian-process model for a pair of light curves.

Both curves are noisy observations of one zero-mean process with the
exponential (damped random walk) kernel ``A**2 * exp(-|t - t'| / ell)``.
The second curve is the first one shifted by the delay, so the joint
covariance of ``y = [y1; y2]`` couples the two blocks through the kernel
evaluated at delay-shifted times.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import linalg

__all__ = [
    "LOGZERO",
    "is_impossible",
    "HyperParams",
    "ObservationGrid",
    "LightCurvePair",
    "PredictiveDecomposition",
    "kernel_eval",
    "build_joint_covariance",
    "log_likelihood",
    "single_curve_log_likelihood",
    "predictive_decomposition",
    "whiten",
    "read_light_curve",
    "write_light_curve",
    "LightCurveFormatError",
]

LOG2PI = math.log(2.0 * math.pi)

#: Log-likelihood of a parameter point the model cannot produce (singular
#: covariance). Test with :func:`is_impossible`, never with ``<``/``==``.
LOGZERO = -np.inf


def is_impossible(logl) -> bool:
    """True if ``logl`` is the impossible-likelihood sentinel (or NaN)."""
    return not np.isfinite(logl)


class LightCurveFormatError(ValueError):
    """Raised for a malformed light-curve CSV file."""


@dataclass(frozen=True)
class HyperParams:
    """Kernel amplitude, length scale, white-noise level and delay."""

    amplitude: float
    length_scale: float
    noise: float
    delay: float = 0.0

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if not self.length_scale > 0:
            raise ValueError(f"length_scale must be positive, got {self.length_scale}")
        if not self.noise >= 0:
            raise ValueError(f"noise must be non-negative, got {self.noise}")
        if not np.isfinite(self.delay):
            raise ValueError(f"delay must be finite, got {self.delay}")

    def with_delay(self, delay: float) -> "HyperParams":
        return replace(self, delay=float(delay))

    def as_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "length_scale": self.length_scale,
            "noise": self.noise,
            "delay": self.delay,
        }


@dataclass(frozen=True)
class ObservationGrid:
    """Strictly increasing observation times shared by both curves."""

    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float, copy=True).ravel()
        if t.size < 1:
            raise ValueError("an observation grid needs at least one time")
        if not np.all(np.isfinite(t)):
            raise ValueError("observation times must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("observation times must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, t_min: float, t_max: float, n_data: int) -> "ObservationGrid":
        if n_data == 1:
            return cls(np.array([float(t_min)]))
        return cls(np.linspace(t_min, t_max, int(n_data)))

    @property
    def n_data(self) -> int:
        return self.times.size

    @property
    def t_min(self) -> float:
        return float(self.times[0])

    @property
    def t_max(self) -> float:
        return float(self.times[-1])

    @property
    def t_range(self) -> float:
        return self.t_max - self.t_min

    @property
    def spacing(self) -> float | None:
        """Uniform spacing, or None for irregular grids (or a single time)."""
        if self.n_data < 2:
            return None
        d = np.diff(self.times)
        if np.allclose(d, d[0], rtol=1e-9, atol=0.0):
            return float(self.t_range / (self.n_data - 1))
        return None

    def contains_delay(self, delay: float) -> bool:
        return abs(delay) <= self.t_range

    def as_dict(self) -> dict:
        return {
            "t_min": self.t_min,
            "t_max": self.t_max,
            "n_data": self.n_data,
            "uniform": self.spacing is not None,
        }

    def __eq__(self, other):
        if not isinstance(other, ObservationGrid):
            return NotImplemented
        return np.array_equal(self.times, other.times)

    def __hash__(self):
        return hash(self.times.tobytes())


@dataclass(frozen=True)
class LightCurvePair:
    y1: np.ndarray = field(repr=False)
    y2: np.ndarray = field(repr=False)
    grid: ObservationGrid

    def __post_init__(self):
        y1 = np.array(self.y1, dtype=float, copy=True).ravel()
        y2 = np.array(self.y2, dtype=float, copy=True).ravel()
        n = self.grid.n_data
        if y1.size != n or y2.size != n:
            raise ValueError(
                f"both curves need {n} magnitudes, got {y1.size} and {y2.size}"
            )
        for y in (y1, y2):
            y.setflags(write=False)
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)

    @property
    def y(self) -> np.ndarray:
        return np.concatenate([self.y1, self.y2])

    def whitened(self) -> "LightCurvePair":
        return LightCurvePair(whiten(self.y1), whiten(self.y2), self.grid)


@dataclass(frozen=True)
class PredictiveDecomposition:
    """Conditional distribution of the second curve given the first."""

    mean: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)
    chi2: float
    penalty: float
    log_pred: float


def kernel_eval(t, t_prime, amplitude, length_scale):
    """Exponential kernel ``A**2 exp(-|t - t'| / ell)``; broadcasts."""
    if not amplitude > 0 or not length_scale > 0:
        raise ValueError("amplitude and length_scale must be positive")
    t = np.asarray(t, dtype=float)
    t_prime = np.asarray(t_prime, dtype=float)
    return amplitude**2 * np.exp(-np.abs(t - t_prime) / length_scale)


def _auto_block(times, theta):
    k = kernel_eval(times[:, None], times[None, :], theta.amplitude, theta.length_scale)
    k[np.diag_indices_from(k)] += theta.noise**2
    return k


def _cross_block(times, theta):
    # [K(t, t - dt)]_ij = k(t_i, t_j - dt); the lower-left block is its transpose
    return kernel_eval(
        times[:, None], times[None, :] - theta.delay,
        theta.amplitude, theta.length_scale,
    )


def build_joint_covariance(grid: ObservationGrid, theta: HyperParams, jitter: float = 0.0):
    """Joint ``2n x 2n`` covariance of the concatenated curves.

    The auto blocks are ``K(t, t) + noise**2 I``; the upper-right block is
    ``K(t, t - delay)`` and the lower-left block is its exact transpose, so
    the result is bitwise symmetric.
    """
    t = grid.times
    n = t.size
    auto = _auto_block(t, theta)
    cross = _cross_block(t, theta)
    out = np.empty((2 * n, 2 * n))
    out[:n, :n] = auto
    out[n:, n:] = auto
    out[:n, n:] = cross
    out[n:, :n] = cross.T
    if jitter:
        out[np.diag_indices_from(out)] += jitter
    return out


def _cholesky(matrix):
    """Lower Cholesky factor, or None if the matrix is not numerically PD."""
    try:
        chol = linalg.cholesky(matrix, lower=True, check_finite=False)
    except linalg.LinAlgError:
        return None
    if not np.all(np.diag(chol) > 0):
        return None
    return chol


def _gaussian_logpdf(y, cov):
    chol = _cholesky(cov)
    if chol is None:
        return LOGZERO
    alpha = linalg.solve_triangular(chol, y, lower=True, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return float(-0.5 * alpha @ alpha - 0.5 * logdet - 0.5 * y.size * LOG2PI)


def log_likelihood(pair: LightCurvePair, theta: HyperParams, jitter: float = 0.0) -> float:
    """Exact joint log-likelihood by dense Cholesky factorisation.

    Returns :data:`LOGZERO` when the joint covariance is not numerically
    positive definite (e.g. zero noise at zero delay).
    """
    cov = build_joint_covariance(pair.grid, theta, jitter)
    return _gaussian_logpdf(pair.y, cov)


def single_curve_log_likelihood(y, grid: ObservationGrid, theta: HyperParams) -> float:
    """Log marginal likelihood of one curve, ``log N(y | 0, K(t, t) + noise**2 I)``."""
    return _gaussian_logpdf(np.asarray(y, dtype=float), _auto_block(grid.times, theta))


def predictive_decomposition(pair: LightCurvePair, theta: HyperParams):
    """Split ``log p(y2 | y1, delay)`` into a chi-square and a log-det penalty.

    Returns a :class:`PredictiveDecomposition`, or one whose ``log_pred`` is
    :data:`LOGZERO` (with NaN chi2/penalty) when either the auto block or the
    conditional covariance is not numerically positive definite.
    """
    t = pair.grid.times
    n = t.size
    auto = _auto_block(t, theta)
    lower_cross = _cross_block(t, theta).T  # K(t - dt, t)
    chol = _cholesky(auto)
    bad = PredictiveDecomposition(
        np.full(n, np.nan), np.full((n, n), np.nan), np.nan, np.nan, LOGZERO
    )
    if chol is None:
        return bad
    # V = L^{-1} K(t, t - dt) so that K(t-dt,t) auto^{-1} K(t,t-dt) = V^T V
    v = linalg.solve_triangular(chol, lower_cross.T, lower=True, check_finite=False)
    w = linalg.solve_triangular(chol, pair.y1, lower=True, check_finite=False)
    mean = v.T @ w
    cov = auto - v.T @ v
    cov = 0.5 * (cov + cov.T)
    chol_c = _cholesky(cov)
    if chol_c is None:
        return PredictiveDecomposition(mean, cov, np.nan, np.nan, LOGZERO)
    r = linalg.solve_triangular(chol_c, pair.y2 - mean, lower=True, check_finite=False)
    chi2 = float(r @ r)
    penalty = float(2.0 * np.sum(np.log(np.diag(chol_c))))
    log_pred = -0.5 * chi2 - 0.5 * penalty - 0.5 * n * LOG2PI
    return PredictiveDecomposition(mean, cov, chi2, penalty, log_pred)


def whiten(curve) -> np.ndarray:
    """Subtract the mean and divide by the sample (``ddof=1``) standard deviation."""
    y = np.asarray(curve, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("whitening needs at least two magnitudes")
    sd = np.std(y, ddof=1)
    if not sd > 0:
        raise ValueError("cannot whiten a constant light curve")
    return (y - y.mean()) / sd


def read_light_curve(path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``time_days,magnitude[,magnitude_err]`` CSV file.

    The error column, if present, is ignored. Raises
    :class:`LightCurveFormatError` with the offending line number.
    """
    path = Path(path)
    times, mags = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise LightCurveFormatError(f"{path}: empty file") from None
        if header[:2] != ["time_days", "magnitude"] or len(header) > 3 or (
            len(header) == 3 and header[2] != "magnitude_err"
        ):
            raise LightCurveFormatError(
                f"{path}:1: expected header 'time_days,magnitude[,magnitude_err]'"
            )
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise LightCurveFormatError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise LightCurveFormatError(f"{path}:{lineno}: non-numeric field") from None
            if not all(math.isfinite(v) for v in vals):
                raise LightCurveFormatError(f"{path}:{lineno}: non-finite value")
            times.append(vals[0])
            mags.append(vals[1])
    if not times:
        raise LightCurveFormatError(f"{path}: no data rows")
    return np.array(times), np.array(mags)


def write_light_curve(path, times, magnitudes) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("time_days,magnitude\n")
        for t, m in zip(times, magnitudes):
            fh.write(f"{float(t)!r},{float(m)!r}\n")
