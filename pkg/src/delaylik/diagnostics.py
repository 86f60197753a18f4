"""Laplace approximation at the central mode and convergence studies.

A sampler run counts as unconverged when its posterior mean lies more than
``f`` Laplace standard deviations from the mode found by Newton's method
started at the true delay. The sampler's own spread is never used as the
yardstick since an edge-trapped run can report a huge one.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .gp import HyperParams, ObservationGrid, is_impossible
from .samplers import NSConfig, PriorBox, SMCConfig, WeightedSamples, nested_sampling, smc
from .statespace import DelayLikelihood
from .synth import sample_pair, stream

__all__ = [
    "LaplaceApprox",
    "LaplaceError",
    "laplace_at_true_mode",
    "ConvergenceRecord",
    "classify_convergence",
    "calibrate_f",
    "StudyConfig",
    "StudyRow",
    "convergence_study",
    "calibrate_study_f",
    "worker_count",
]

DEFAULT_F = 5.0
THREADS_ENV = "DELAYLIK_THREADS"


class LaplaceError(RuntimeError):
    """Newton's method left the prior box or stopped at a non-maximum."""


@dataclass(frozen=True)
class LaplaceApprox:
    mode: float
    sd: float
    curvature: float
    iterations: int = 0


def _derivatives(f, x, h):
    fp, f0, fm = f(x + h), f(x), f(x - h)
    if is_impossible(fp) or is_impossible(f0) or is_impossible(fm):
        raise LaplaceError(f"likelihood impossible within {h} of {x}")
    return (fp - fm) / (2.0 * h), (fp - 2.0 * f0 + fm) / (h * h)


def laplace_at_true_mode(loglik, delta_init: float, bounds=None, h: float | None = None,
                         t_range: float | None = None, tol: float = 1e-6,
                         max_iter: int = 100) -> LaplaceApprox:
    """Newton iteration on the derivative of a 1-D log-likelihood.

    Parameters
    ----------
    loglik : callable
        Maps a float delay to a log-likelihood.
    delta_init : float
        Starting point, normally the true delay.
    bounds : (float, float), optional
        Prior box; leaving it raises :class:`LaplaceError`.
    h : float, optional
        Finite-difference step. Defaults to ``max(1e-3, 1e-6 * t_range)``.
    """
    if h is None:
        h = max(1e-3, 1e-6 * (t_range if t_range is not None else 0.0))
    x = float(delta_init)
    for it in range(1, max_iter + 1):
        grad, curv = _derivatives(loglik, x, h)
        if not (math.isfinite(grad) and math.isfinite(curv)) or curv == 0:
            raise LaplaceError(f"degenerate derivatives at {x}")
        step = -grad / curv
        x += step
        if bounds is not None and not bounds[0] <= x <= bounds[1]:
            raise LaplaceError(f"Newton iterate {x} left the prior box {tuple(bounds)}")
        if abs(step) < tol:
            break
    _, curv = _derivatives(loglik, x, h)
    if not curv < 0:
        raise LaplaceError(f"curvature {curv} at {x} is not that of a maximum")
    return LaplaceApprox(x, 1.0 / math.sqrt(-curv), curv, it)


@dataclass(frozen=True)
class ConvergenceRecord:
    run_id: int
    budget: int
    posterior_mean: float
    laplace: LaplaceApprox
    deviation: float
    f_threshold: float
    converged: bool

    def as_row(self) -> dict:
        return {
            "run_id": self.run_id,
            "budget": self.budget,
            "posterior_mean": self.posterior_mean,
            "laplace_mode": self.laplace.mode,
            "laplace_sd": self.laplace.sd,
            "curvature": self.laplace.curvature,
            "deviation": self.deviation,
            "f_threshold": self.f_threshold,
            "converged": int(self.converged),
        }


def _deviation(samples: WeightedSamples, laplace: LaplaceApprox) -> tuple[float, float]:
    mean = float(samples.mean()[0])
    return mean, abs(mean - laplace.mode) / laplace.sd


def classify_convergence(samples: WeightedSamples, laplace: LaplaceApprox, f: float = DEFAULT_F,
                         run_id: int = 0, budget: int | None = None) -> ConvergenceRecord:
    """Deviation of the weighted posterior mean of the delay, in Laplace sd units."""
    if len(samples) == 0:
        raise ValueError("empty sample set")
    mean, dev = _deviation(samples, laplace)
    if budget is None:
        budget = int(samples.info.get("config", {}).get("nlive", 0)
                     or samples.info.get("config", {}).get("n_particles", 0))
    return ConvergenceRecord(run_id, budget, mean, laplace, dev, float(f), bool(dev <= f))


def calibrate_f(reference_runs, laplace) -> float:
    """Largest deviation among runs trusted to be converged.

    ``laplace`` is one :class:`LaplaceApprox` shared by all runs or a list
    matching ``reference_runs``.
    """
    runs = list(reference_runs)
    if not runs:
        raise ValueError("calibration needs at least one reference run")
    fits = list(laplace) if isinstance(laplace, (list, tuple)) else [laplace] * len(runs)
    if len(fits) != len(runs):
        raise ValueError("one Laplace fit per reference run is required")
    return max(_deviation(s, lap)[1] for s, lap in zip(runs, fits))


@dataclass(frozen=True)
class StudyConfig:
    """Settings of an unconverged-fraction study.

    Each run draws its own dataset unless ``shared_datasets`` is set, in
    which case run ``r`` reuses one dataset across budgets.
    """

    samplers: tuple = ("ns",)
    budgets: tuple = (10, 25, 100, 250)
    t_ranges: tuple = (1000.0,)
    n_runs: int = 50
    n_data: int = 100
    amplitude: float = 1.0
    length_scale: float = 10.0
    noise: float = 0.01
    true_delay: float = 10.0
    base_seed: int = 0
    f: float = DEFAULT_F
    smc_mcmc_steps: int = 5
    shared_datasets: bool = False
    workers: int | None = None

    def __post_init__(self):
        if not self.budgets:
            raise ValueError("budgets must not be empty")
        if not self.t_ranges:
            raise ValueError("t_ranges must not be empty")
        unknown = set(self.samplers) - {"ns", "smc"}
        if unknown or not self.samplers:
            raise ValueError(f"unknown sampler kinds {sorted(unknown)}")
        if self.n_runs < 1:
            raise ValueError("n_runs must be positive")
        if not self.f > 0:
            raise ValueError("f must be positive")

    @property
    def theta(self) -> HyperParams:
        return HyperParams(self.amplitude, self.length_scale, self.noise, self.true_delay)

    def as_dict(self) -> dict:
        out = asdict(self)
        for key in ("samplers", "budgets", "t_ranges"):
            out[key] = list(out[key])
        return out


@dataclass(frozen=True)
class StudyRow:
    sampler: str
    budget: int
    t_range: float
    n_runs: int
    n_unconverged: int
    n_excluded: int
    records: tuple = field(default=(), repr=False)

    @property
    def fraction(self) -> float:
        used = self.n_runs - self.n_excluded
        return self.n_unconverged / used if used else math.nan

    def as_row(self) -> dict:
        return {
            "sampler": self.sampler,
            "budget": self.budget,
            "t_range": self.t_range,
            "n_runs": self.n_runs,
            "n_unconverged": self.n_unconverged,
            "n_excluded": self.n_excluded,
            "fraction": self.fraction,
        }


def worker_count(requested: int | None = None) -> int:
    """Worker processes: explicit request, else ``DELAYLIK_THREADS``, else 1."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """Order-preserving map, in worker processes when more than one is asked for."""
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def run_sampler(kind: str, loglik, prior: PriorBox, budget: int, seed: int,
                smc_mcmc_steps: int = 5) -> WeightedSamples:
    if kind == "ns":
        return nested_sampling(loglik, prior, NSConfig(nlive=budget, seed=seed))
    if kind == "smc":
        return smc(loglik, prior, SMCConfig(n_particles=budget, seed=seed,
                                            mcmc_steps=smc_mcmc_steps))
    raise ValueError(f"unknown sampler kind {kind!r}")


def _study_task(task):
    cfg, kind, budget, t_range, run_id, data_seed, run_seed = task
    theta = cfg.theta
    grid = ObservationGrid.uniform(0.0, t_range, cfg.n_data)
    like = DelayLikelihood(sample_pair(grid, theta, data_seed), theta)
    samples = run_sampler(kind, like, PriorBox.delay_only(t_range), budget, run_seed,
                          cfg.smc_mcmc_steps)
    try:
        lap = laplace_at_true_mode(like.scalar, theta.delay, (-t_range, t_range),
                                   t_range=t_range)
    except LaplaceError:
        return None
    return classify_convergence(samples, lap, cfg.f, run_id, budget)


def study_tasks(cfg: StudyConfig) -> list:
    """Deterministic task list; seeds depend only on the cell and run index."""
    tasks = []
    for si, kind in enumerate(cfg.samplers):
        for ti, t_range in enumerate(cfg.t_ranges):
            for bi, budget in enumerate(cfg.budgets):
                for r in range(cfg.n_runs):
                    if cfg.shared_datasets:
                        data_idx = ti * cfg.n_runs + r
                    else:
                        data_idx = ((si * len(cfg.t_ranges) + ti) * len(cfg.budgets) + bi) \
                            * cfg.n_runs + r
                    run_idx = ((si * len(cfg.t_ranges) + ti) * len(cfg.budgets) + bi) \
                        * cfg.n_runs + r
                    tasks.append((cfg, kind, int(budget), float(t_range), r,
                                  stream(cfg.base_seed, 2 * data_idx),
                                  stream(cfg.base_seed, 2 * run_idx + 1)))
    return tasks


def convergence_study(cfg: StudyConfig) -> list[StudyRow]:
    """Unconverged fraction per (sampler, budget, t_range) cell.

    Runs whose Laplace fit fails are counted as excluded and left out of
    the fraction's denominator.
    """
    tasks = study_tasks(cfg)
    results = parallel_map(_study_task, tasks, cfg.workers)
    rows = []
    cells = {}
    for task, rec in zip(tasks, results):
        key = (task[1], task[2], task[3])
        cells.setdefault(key, []).append(rec)
    for (kind, budget, t_range), recs in cells.items():
        kept = tuple(r for r in recs if r is not None)
        rows.append(StudyRow(kind, budget, t_range, len(recs),
                             sum(not r.converged for r in kept), len(recs) - len(kept), kept))
    return rows


def _reference_task(task):
    cfg, t_range, nlive, data_seed, run_seed = task
    theta = cfg.theta
    grid = ObservationGrid.uniform(0.0, t_range, cfg.n_data)
    like = DelayLikelihood(sample_pair(grid, theta, data_seed), theta)
    samples = nested_sampling(like, PriorBox.delay_only(t_range),
                              NSConfig(nlive=nlive, seed=run_seed))
    lap = laplace_at_true_mode(like.scalar, theta.delay, (-t_range, t_range), t_range=t_range)
    return samples, lap


def calibrate_study_f(cfg: StudyConfig, n_reference: int = 10, nlive: int = 500,
                      t_range: float | None = None, seed: int | None = None):
    """Calibrate ``f`` from high-budget nested-sampling reference runs.

    Reference datasets use their own seed stream (``seed``, default
    ``cfg.base_seed + 1``) so they never coincide with study datasets.
    Returns ``(f, records)`` with records classified at the calibrated ``f``.
    """
    if n_reference < 1:
        raise ValueError("calibration needs at least one reference run")
    t_range = float(cfg.t_ranges[0] if t_range is None else t_range)
    seed = cfg.base_seed + 1 if seed is None else seed
    tasks = [(cfg, t_range, nlive, stream(seed, 2 * k), stream(seed, 2 * k + 1))
             for k in range(n_reference)]
    refs = parallel_map(_reference_task, tasks, cfg.workers)
    f = calibrate_f([s for s, _ in refs], [lap for _, lap in refs])
    records = [classify_convergence(s, lap, f, k, nlive) for k, (s, lap) in enumerate(refs)]
    return f, records
