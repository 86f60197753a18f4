from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from ..gp import is_impossible

__all__ = ["PriorBox", "WeightedSamples", "merge_equal_weight", "SamplerConfigError"]


class SamplerConfigError(ValueError):
    """A sampler cannot start, e.g. no point of finite likelihood was found."""


@dataclass(frozen=True)
class PriorBox:
    """Independent uniform priors, one ``(lower, upper)`` pair per dimension."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-D and of equal length")
        if not np.all(lo < hi):
            raise ValueError("each lower bound must be below its upper bound")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        names = tuple(self.names) or tuple(f"param_{i}" for i in range(lo.size))
        object.__setattr__(self, "names", names)

    @classmethod
    def delay_only(cls, t_range: float) -> "PriorBox":
        return cls([-t_range], [t_range], ("delay",))

    @classmethod
    def delay_length_noise(cls, t_range: float) -> "PriorBox":
        """Uniform priors on delay in [-T, T], length scale in [0, T], noise in [0, 1]."""
        return cls([-t_range, 0.0, 0.0], [t_range, t_range, 1.0],
                   ("delay", "length_scale", "noise"))

    @property
    def ndim(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def log_volume(self) -> float:
        return float(np.sum(np.log(self.width)))

    def contains(self, x) -> bool:
        x = np.asarray(x)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.lower + self.width * rng.random((size, self.ndim))


@dataclass
class WeightedSamples:
    """Weighted posterior samples.

    ``log_weights`` are normalised (``logsumexp(log_weights) == 0``).
    """

    points: np.ndarray
    log_weights: np.ndarray
    log_likelihood: np.ndarray
    logZ: float
    logZ_err: float
    names: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        lw = np.asarray(self.log_weights, dtype=float)
        self.log_weights = lw - logsumexp(lw)
        self.log_likelihood = np.asarray(self.log_likelihood, dtype=float)
        if not self.names:
            self.names = tuple(f"param_{i}" for i in range(self.points.shape[1]))

    def __len__(self):
        return self.points.shape[0]

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return w / w.sum()

    @property
    def ess(self) -> float:
        """Kish effective sample size."""
        return float(np.exp(-logsumexp(2.0 * self.log_weights)))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def cov(self) -> np.ndarray:
        return np.atleast_2d(np.cov(self.points, rowvar=False, aweights=self.weights, ddof=0))

    def std(self) -> np.ndarray:
        return np.sqrt(np.diag(self.cov()))

    def equal_weight(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        """Multinomial resample to ``size`` (default: rounded ESS) equal-weight points.

        Points that already carry equal weights are shuffled rather than
        resampled when the full set is requested.
        """
        if size is None:
            size = max(1, int(round(self.ess)))
        w = self.weights
        if size == len(self) and np.allclose(w, 1.0 / len(self), rtol=1e-9, atol=0.0):
            return self.points[rng.permutation(len(self))]
        idx = rng.choice(len(self), size=size, replace=True, p=w)
        return self.points[idx]

    def to_csv(self, path, metadata: dict | None = None) -> None:
        """Write ``param_0..,log_weight,log_likelihood`` plus a ``.json`` sidecar."""
        path = Path(path)
        d = self.points.shape[1]
        with path.open("w", newline="", encoding="utf-8") as fh:
            fh.write(",".join([f"param_{i}" for i in range(d)]
                              + ["log_weight", "log_likelihood"]) + "\n")
            for x, lw, ll in zip(self.points, self.log_weights, self.log_likelihood):
                fh.write(",".join(repr(float(v)) for v in (*x, lw, ll)) + "\n")
        meta = {
            "logZ": self.logZ,
            "logZ_err": self.logZ_err,
            "ess": self.ess,
            "n_samples": len(self),
            "names": list(self.names),
            "info": self.info,
        }
        if metadata:
            meta.update(metadata)
        path.with_suffix(".json").write_text(
            json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n",
            encoding="utf-8",
        )

    @classmethod
    def from_csv(cls, path) -> "WeightedSamples":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        return cls(data[:, :-2], data[:, -2], data[:, -1], meta["logZ"],
                   meta["logZ_err"], tuple(meta.get("names", ())), meta.get("info", {}))


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)!r}")


def merge_equal_weight(samples, rng: np.random.Generator, sizes=None) -> np.ndarray:
    """Pool several runs as equal-weight samples.

    Each run is resampled (multinomially) to its rounded effective sample
    size unless ``sizes`` is given, then the pools are concatenated.
    """
    samples = list(samples)
    if sizes is None:
        sizes = [None] * len(samples)
    pools = []
    for s, n in zip(samples, sizes):
        if len(s) == 0:
            raise ValueError("cannot merge an empty sample set")
        pools.append(s.equal_weight(rng, n))
    return np.concatenate(pools, axis=0)


def finite_loglik(value) -> bool:
    return not is_impossible(value)
