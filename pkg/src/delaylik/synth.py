"""Seeded synthetic light-curve pairs drawn from the joint GP.

Random streams
--------------
Every draw uses numpy's ``Philox`` (4x64, 10 rounds) counter-based bit
generator keyed by a 128-bit integer, wrapped in ``numpy.random.Generator``;
standard normals come from numpy's ziggurat sampler. Dataset ``k`` of an
ensemble with base seed ``s`` (``0 <= s < 2**64``) uses the key
``stream(s, k) = s + k * 2**64``, so keys are distinct for every
``(s, k)`` with ``k < 2**64`` and ``stream(s, 0) == s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .gp import HyperParams, LightCurvePair, ObservationGrid, build_joint_covariance

__all__ = ["stream", "make_rng", "sample_pair", "EnsembleSpec", "sample_ensemble"]

_U64 = 1 << 64


def stream(base_seed: int, index: int) -> int:
    """128-bit Philox key for member ``index`` of the stream ``base_seed``."""
    base_seed = int(base_seed)
    index = int(index)
    if not 0 <= base_seed < _U64:
        raise ValueError("base_seed must be a 64-bit unsigned integer")
    if not 0 <= index < _U64:
        raise ValueError("stream index must be a 64-bit unsigned integer")
    return base_seed + index * _U64


def make_rng(seed: int) -> np.random.Generator:
    seed = int(seed)
    if not 0 <= seed < _U64 * _U64:
        raise ValueError("seed must fit in 128 bits")
    return np.random.Generator(np.random.Philox(key=seed))


def _matrix_sqrt(cov):
    try:
        return linalg.cholesky(cov, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    # Near-singular but PSD (e.g. zero delay with tiny noise): symmetric square root.
    w, v = linalg.eigh(cov, check_finite=False)
    if w.min() < -1e-10 * max(w.max(), 1.0):
        raise linalg.LinAlgError("joint covariance is not positive semi-definite")
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_pair(grid: ObservationGrid, theta_true: HyperParams, seed: int) -> LightCurvePair:
    """Draw ``y = L z`` with ``L`` the Cholesky factor of the joint covariance.

    When the factorisation fails for a matrix that is positive semi-definite
    to round-off (tiny noise at a coincident delay), the symmetric
    eigen-square-root is used instead. Zero noise is rejected.
    """
    if not theta_true.noise > 0:
        raise ValueError("sampling requires positive noise")
    cov = build_joint_covariance(grid, theta_true)
    root = _matrix_sqrt(cov)
    z = make_rng(seed).standard_normal(cov.shape[0])
    y = root @ z
    n = grid.n_data
    return LightCurvePair(y[:n], y[n:], grid)


@dataclass(frozen=True)
class EnsembleSpec:
    theta_true: HyperParams
    grid: ObservationGrid
    n_datasets: int
    base_seed: int

    def __post_init__(self):
        if self.n_datasets < 1:
            raise ValueError("n_datasets must be at least 1")
        stream(self.base_seed, 0)  # validates the seed range

    def seed(self, k: int) -> int:
        return stream(self.base_seed, k)


def sample_ensemble(spec: EnsembleSpec) -> list[LightCurvePair]:
    """Independent pairs, member ``k`` drawn with key ``stream(base_seed, k)``."""
    # The Cholesky factor is shared; only the normal draws differ per member.
    cov = build_joint_covariance(spec.grid, spec.theta_true)
    if not spec.theta_true.noise > 0:
        raise ValueError("sampling requires positive noise")
    root = _matrix_sqrt(cov)
    n = spec.grid.n_data
    out = []
    for k in range(spec.n_datasets):
        y = root @ make_rng(spec.seed(k)).standard_normal(2 * n)
        out.append(LightCurvePair(y[:n], y[n:], spec.grid))
    return out
