"""O(n) evaluation of the delayed-pair likelihood for the exponential kernel.

The exponential kernel is the covariance of a stationary Ornstein-Uhlenbeck
process, which is Markov. Both curves observe the same process: ``y1`` at
the grid times and ``y2`` at the grid times shifted back by the delay. Merging
the two sorted time sets and running a scalar Kalman filter gives the same
log-likelihood as the dense ``2n x 2n`` Cholesky route in
:mod:`delaylik.gp`, at linear cost. The samplers use this path.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .gp import LOGZERO, HyperParams, LightCurvePair

__all__ = ["ou_pair_loglik", "ou_pair_loglik_many", "DelayLikelihood", "JointLikelihood"]

_LOG2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def _kalman_pair(t, y1, y2, delay, amp2, ell, noise2):
    n = t.size
    i = 0
    j = 0
    m = 0.0
    p = amp2
    prev = 0.0
    total = 0.0
    first = True
    for _ in range(2 * n):
        # y2[j] sits at t[j] - delay; ties resolve to y1 first
        if j >= n or (i < n and t[i] <= t[j] - delay):
            tk = t[i]
            yk = y1[i]
            i += 1
        else:
            tk = t[j] - delay
            yk = y2[j]
            j += 1
        if not first:
            phi = math.exp(-(tk - prev) / ell)
            m = phi * m
            p = phi * phi * p + amp2 * (1.0 - phi * phi)
        first = False
        prev = tk
        s = p + noise2
        if not s > 0.0:
            return -np.inf
        v = yk - m
        total += -0.5 * (math.log(s) + v * v / s + _LOG2PI)
        gain = p / s
        m = m + gain * v
        p = p * noise2 / s
    return total


@njit(cache=True)
def _kalman_pair_many(t, y1, y2, delays, amp2, ell, noise2):
    out = np.empty(delays.size)
    for k in range(delays.size):
        out[k] = _kalman_pair(t, y1, y2, delays[k], amp2, ell, noise2)
    return out


def ou_pair_loglik(pair: LightCurvePair, theta: HyperParams) -> float:
    """Joint log-likelihood of ``pair`` at ``theta`` via the Kalman filter."""
    return float(_kalman_pair(
        pair.grid.times, pair.y1, pair.y2, float(theta.delay),
        theta.amplitude**2, theta.length_scale, theta.noise**2,
    ))


def ou_pair_loglik_many(pair: LightCurvePair, theta: HyperParams, delays) -> np.ndarray:
    """Vectorised :func:`ou_pair_loglik` over an array of delays (``theta.delay`` ignored)."""
    delays = np.ascontiguousarray(delays, dtype=float)
    return _kalman_pair_many(
        pair.grid.times, pair.y1, pair.y2, delays,
        theta.amplitude**2, theta.length_scale, theta.noise**2,
    )


class DelayLikelihood:
    """Log-likelihood as a function of the delay alone, other hyperparameters fixed.

    Instances are callables taking a length-1 parameter vector, the
    convention used by the samplers.
    """

    ndim = 1
    names = ("delay",)

    def __init__(self, pair: LightCurvePair, theta: HyperParams):
        self.pair = pair
        self.theta = theta
        self._t = pair.grid.times
        self._y1 = pair.y1
        self._y2 = pair.y2
        self._amp2 = theta.amplitude**2
        self._ell = theta.length_scale
        self._noise2 = theta.noise**2

    def __call__(self, x) -> float:
        delay = float(x[0]) if np.ndim(x) else float(x)
        return _kalman_pair(self._t, self._y1, self._y2, delay,
                            self._amp2, self._ell, self._noise2)

    def many(self, delays) -> np.ndarray:
        delays = np.ascontiguousarray(delays, dtype=float).ravel()
        return _kalman_pair_many(self._t, self._y1, self._y2, delays,
                                 self._amp2, self._ell, self._noise2)

    # scalar convenience for quadrature and Newton iterations
    def scalar(self, delay: float) -> float:
        return _kalman_pair(self._t, self._y1, self._y2, float(delay),
                            self._amp2, self._ell, self._noise2)


class JointLikelihood:
    """Log-likelihood over ``(delay, length_scale, noise)`` with the amplitude fixed."""

    ndim = 3
    names = ("delay", "length_scale", "noise")

    def __init__(self, pair: LightCurvePair, amplitude: float = 1.0):
        self.pair = pair
        self.amplitude = amplitude
        self._t = pair.grid.times
        self._y1 = pair.y1
        self._y2 = pair.y2
        self._amp2 = amplitude**2

    def __call__(self, x) -> float:
        delay, ell, noise = float(x[0]), float(x[1]), float(x[2])
        if not ell > 0 or not noise >= 0:
            return LOGZERO
        return _kalman_pair(self._t, self._y1, self._y2, delay,
                            self._amp2, ell, noise * noise)
