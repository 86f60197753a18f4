from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

__all__ = ["posterior_quadrature", "QuadratureError"]


class QuadratureError(ValueError):
    pass


def _evaluate(loglik, x):
    many = getattr(loglik, "many", None)
    if many is not None:
        return np.asarray(many(x), dtype=float)
    return np.array([loglik(np.array([xi])) for xi in x], dtype=float)


def posterior_quadrature(loglik, bounds, n_points: int = 100_001):
    """Trapezoid-rule posterior of a 1-D likelihood under a uniform prior.

    Parameters
    ----------
    loglik : callable
        Takes a length-1 array. If it has a ``many`` method, that is used to
        evaluate the whole grid at once.
    bounds : (float, float)
        Prior support.
    n_points : int
        Number of grid nodes, at least 100.

    Returns
    -------
    x : ndarray
        Grid nodes.
    density : ndarray
        Normalised posterior density at the nodes.
    logZ : float
        Log evidence, ``log((1/(b-a)) * integral of L)``.
    """
    lo, hi = map(float, bounds)
    if n_points < 100:
        raise ValueError("n_points must be at least 100")
    if not lo < hi:
        raise ValueError("bounds must satisfy lower < upper")
    x = np.linspace(lo, hi, int(n_points))
    logl = _evaluate(loglik, x)
    finite = np.isfinite(logl)
    if not finite.any():
        raise QuadratureError("likelihood is impossible at every grid node")
    logl = np.where(finite, logl, -np.inf)
    h = x[1] - x[0]
    log_trap = np.full(x.size, math.log(h))
    log_trap[[0, -1]] -= math.log(2.0)
    log_integral = logsumexp(logl + log_trap)
    density = np.exp(logl - log_integral)
    log_z = float(log_integral - math.log(hi - lo))
    return x, density, log_z


def grid_moments(x, density):
    """Mean and standard deviation of a density tabulated on a uniform grid."""
    w = np.full(x.size, x[1] - x[0])
    w[[0, -1]] *= 0.5
    p = density * w
    p = p / p.sum()
    mean = float(p @ x)
    return mean, float(math.sqrt(max(p @ (x - mean) ** 2, 0.0)))
