"""Desk-scale experiment recipes.

Each recipe is a plain function returning arrays or small result objects;
the command-line harness, the demo scripts and the acceptance tests all
call these. Seeds below are the shipped defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import analytic
from .diagnostics import StudyConfig, calibrate_study_f, convergence_study, parallel_map
from .gp import HyperParams, LightCurvePair, ObservationGrid
from .samplers import (NSConfig, PriorBox, SMCConfig, WeightedSamples, merge_equal_weight,
                       nested_sampling, smc)
from .statespace import DelayLikelihood, JointLikelihood
from .synth import make_rng, sample_pair, stream

__all__ = [
    "DATA_SEED", "RUN_SEED", "MERGE_SEED", "JOINT_DATA_SEED", "JOINT_RUN_SEED",
    "JOINT_MERGE_SEED", "STUDY_SEED",
    "averaged_scan", "w_shape_checks", "data_scan",
    "ModeAssignment", "assign_mode", "EnsemblePosterior",
    "delay_posterior_ensemble", "joint_posterior_ensemble", "convergence_experiment",
    "appendix_lengthscale", "appendix_moments", "appendix_bayes_spectrum",
    "appendix_condition",
]

DATA_SEED = 2024
RUN_SEED = 777
MERGE_SEED = 5
JOINT_DATA_SEED = 4242
JOINT_RUN_SEED = 4343
JOINT_MERGE_SEED = 6
STUDY_SEED = 3


def _theta(amplitude, length_scale, noise, true_delay):
    return HyperParams(amplitude, length_scale, noise, true_delay)


def averaged_scan(n_data: int = 100, t_range: float = 1000.0, length_scale: float = 10.0,
                  noise: float = 0.01, true_delay: float = 10.0, amplitude: float = 1.0,
                  n_delays: int = 2001, decorrelated_delay="t_range") -> dict:
    """Data-averaged log-likelihood over a uniform delay grid on ``[-t_range, t_range]``."""
    if n_delays < 1:
        raise ValueError("the delay grid must have at least one point")
    grid = ObservationGrid.uniform(0.0, t_range, n_data)
    theta = _theta(amplitude, length_scale, noise, true_delay)
    delays = np.linspace(-t_range, t_range, n_delays)
    return analytic.averaged_loglik_scan(grid, theta, theta, delays, decorrelated_delay)


def _at(scan, delay, key="e_loglik"):
    i = int(np.argmin(np.abs(scan["delta_t"] - delay)))
    return float(scan[key][i])


def w_shape_checks(scan: dict, true_delay: float, t_range: float) -> dict:
    """Numbers behind the W-shape claims, read off an :func:`averaged_scan` result."""
    d = scan["delta_t"]
    step = float(d[1] - d[0]) if d.size > 1 else 0.0
    e = scan["e_loglik"]
    reg = scan["e_loglik_reg"]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sqrt(scan["var_exact"]) / np.abs(e)
    return {
        "grid_step": step,
        "argmax": float(d[int(np.nanargmax(e))]),
        "argmax_reg": float(d[int(np.nanargmax(reg))]),
        "e_true": _at(scan, true_delay),
        "e_plus_edge": _at(scan, t_range),
        "e_minus_edge": _at(scan, -t_range),
        "e_plus_095": _at(scan, 0.95 * t_range),
        "e_minus_095": _at(scan, -0.95 * t_range),
        "e_plus_050": _at(scan, 0.5 * t_range),
        "e_minus_050": _at(scan, -0.5 * t_range),
        "reg_true": _at(scan, true_delay, "e_loglik_reg"),
        "reg_plus_edge": _at(scan, t_range, "e_loglik_reg"),
        "reg_minus_edge": _at(scan, -t_range, "e_loglik_reg"),
        "median_sd_ratio": float(np.nanmedian(ratio)),
        "median_sd_ratio_elementwise": float(np.nanmedian(scan["sd_elementwise"] / np.abs(e))),
    }


def data_scan(pair: LightCurvePair, length_scales, delays, amplitude: float = 1.0,
              noise: float = 0.01, whiten_curves: bool = True) -> dict:
    """Single-dataset log-likelihood cuts ``logL(delay)`` at several fixed length scales."""
    delays = np.asarray(delays, dtype=float)
    if delays.size == 0:
        raise ValueError("empty delay grid")
    if whiten_curves:
        pair = pair.whitened()
    out = {"delta_t": delays}
    for ell in length_scales:
        like = DelayLikelihood(pair, HyperParams(amplitude, float(ell), noise, 0.0))
        out[f"loglik_ell_{float(ell):g}"] = like.many(delays)
    return out


@dataclass(frozen=True)
class ModeAssignment:
    label: str
    mass: float
    masses: dict

    @property
    def edge_mass(self) -> float:
        return self.masses["plus_edge"] + self.masses["minus_edge"]


def assign_mode(samples: WeightedSamples, true_delay: float, t_range: float,
                column: int = 0) -> ModeAssignment:
    """Nearest of ``{true_delay, +t_range, -t_range}`` by posterior mass within ``t_range/4``."""
    x = samples.points[:, column]
    w = samples.weights
    centres = {"central": true_delay, "plus_edge": t_range, "minus_edge": -t_range}
    masses = {k: float(w[np.abs(x - c) < t_range / 4].sum()) for k, c in centres.items()}
    label = max(masses, key=masses.get)
    return ModeAssignment(label, masses[label], masses)


@dataclass
class EnsemblePosterior:
    runs: list
    modes: list
    pool: np.ndarray
    config: dict = field(default_factory=dict)

    def pooled_fraction(self, lo: float, hi: float, column: int = 0, absolute=False) -> float:
        x = self.pool[:, column]
        if absolute:
            x = np.abs(x)
        return float(np.mean((x >= lo) & (x <= hi)))


def _delay_task(task):
    grid, theta, data_seed, run_seed, sampler, budget, repeats = task
    like = DelayLikelihood(sample_pair(grid, theta, data_seed), theta)
    prior = PriorBox.delay_only(grid.t_range)
    if sampler == "smc":
        return smc(like, prior, SMCConfig(n_particles=budget, seed=run_seed))
    return nested_sampling(like, prior, NSConfig(nlive=budget, num_repeats=repeats,
                                                 seed=run_seed))


def delay_posterior_ensemble(n_data: int = 100, t_range: float = 1000.0, n_datasets: int = 25,
                             nlive: int = 75, length_scale: float = 10.0, noise: float = 0.01,
                             true_delay: float = 10.0, amplitude: float = 1.0,
                             data_seed: int = DATA_SEED, run_seed: int = RUN_SEED,
                             merge_seed: int = MERGE_SEED, sampler: str = "ns",
                             num_repeats: int | None = None, workers=None) -> EnsemblePosterior:
    """Delay-only posteriors for an i.i.d. ensemble, merged as equal-weight samples.

    Dataset ``k`` uses ``stream(data_seed, k)`` and its sampler
    ``stream(run_seed, k)``, so a single member can be re-run alone.
    """
    grid = ObservationGrid.uniform(0.0, t_range, n_data)
    theta = _theta(amplitude, length_scale, noise, true_delay)
    tasks = [(grid, theta, stream(data_seed, k), stream(run_seed, k), sampler, nlive,
              num_repeats) for k in range(n_datasets)]
    runs = parallel_map(_delay_task, tasks, workers)
    modes = [assign_mode(r, true_delay, t_range) for r in runs]
    pool = merge_equal_weight(runs, make_rng(merge_seed))
    cfg = dict(n_data=n_data, t_range=t_range, n_datasets=n_datasets, nlive=nlive,
               length_scale=length_scale, noise=noise, true_delay=true_delay,
               amplitude=amplitude, data_seed=data_seed, run_seed=run_seed,
               merge_seed=merge_seed, sampler=sampler)
    return EnsemblePosterior(runs, modes, pool, cfg)


def _joint_task(task):
    grid, theta, data_seed, run_seed, nlive, repeats = task
    like = JointLikelihood(sample_pair(grid, theta, data_seed), theta.amplitude)
    return nested_sampling(like, PriorBox.delay_length_noise(grid.t_range),
                           NSConfig(nlive=nlive, num_repeats=repeats, seed=run_seed))


def joint_posterior_ensemble(n_data: int = 400, t_range: float = 1000.0, n_datasets: int = 12,
                             nlive: int = 15, num_repeats: int = 3, length_scale: float = 10.0,
                             noise: float = 0.01, true_delay: float = 10.0,
                             amplitude: float = 1.0, data_seed: int = JOINT_DATA_SEED,
                             run_seed: int = JOINT_RUN_SEED, merge_seed: int = JOINT_MERGE_SEED,
                             workers=None) -> EnsemblePosterior:
    """Joint ``(delay, length_scale, noise)`` posteriors merged over an ensemble."""
    grid = ObservationGrid.uniform(0.0, t_range, n_data)
    theta = _theta(amplitude, length_scale, noise, true_delay)
    tasks = [(grid, theta, stream(data_seed, k), stream(run_seed, k), nlive, num_repeats)
             for k in range(n_datasets)]
    runs = parallel_map(_joint_task, tasks, workers)
    modes = [assign_mode(r, true_delay, t_range) for r in runs]
    pool = merge_equal_weight(runs, make_rng(merge_seed))
    cfg = dict(n_data=n_data, t_range=t_range, n_datasets=n_datasets, nlive=nlive,
               num_repeats=num_repeats, length_scale=length_scale, noise=noise,
               true_delay=true_delay, amplitude=amplitude, data_seed=data_seed,
               run_seed=run_seed, merge_seed=merge_seed)
    return EnsemblePosterior(runs, modes, pool, cfg)


def convergence_experiment(cfg: StudyConfig, calibrate: bool = True, n_reference: int = 10,
                           reference_nlive: int = 500):
    """Calibrate ``f`` (optionally), then run the unconverged-fraction study.

    Returns ``(cfg_used, calibration_records, rows)``; ``cfg_used.f`` holds
    the threshold actually applied.
    """
    records = []
    if calibrate:
        f, records = calibrate_study_f(cfg, n_reference=n_reference, nlive=reference_nlive)
        cfg = StudyConfig(**{**cfg.as_dict(), "f": f,
                             "samplers": tuple(cfg.samplers), "budgets": tuple(cfg.budgets),
                             "t_ranges": tuple(cfg.t_ranges)})
    return cfg, records, convergence_study(cfg)


def appendix_lengthscale(true_length_scale: float = 10.0, spacing: float = 10.0,
                         n_points: int = 1000, ell_min: float = 0.1, ell_max: float = 100.0):
    """Per-point large-sample log-likelihood on a uniform length-scale grid."""
    ell = np.linspace(ell_min, ell_max, n_points)
    return ell, analytic.largescale_length_loglik(ell, true_length_scale, spacing)


def appendix_moments(n_data_values=(1, 2, 3, 4), noises=(1e-2, 1e-3, 1e-4),
                     length_scale: float = 10.0, spacing: float = 10.0,
                     amplitude: float = 1.0) -> list[tuple]:
    """Rows ``(n_data, noise, log_EL, log_EL_closed, log_EL2, log_EL2_closed)`` at zero delay."""
    rows = []
    for m in n_data_values:
        grid = ObservationGrid(np.arange(m, dtype=float) * spacing)
        for s in noises:
            theta = HyperParams(amplitude, length_scale, s, 0.0)
            general = analytic.averaged_likelihood_moments(grid, theta, theta)
            closed = analytic.zero_delay_moments(grid, theta)
            rows.append((m, s, general[0], closed[0], general[1], closed[1]))
    return rows


def appendix_bayes_spectrum(n_data: int = 50, t_range: float = 1000.0, amplitude: float = 1.0,
                            length_scale: float = 10.0, noise: float = 0.01):
    grid = ObservationGrid.uniform(0.0, t_range, n_data) if n_data > 1 \
        else ObservationGrid(np.array([0.0]))
    return analytic.bayes_factor_spectrum(grid, amplitude, length_scale, noise)


def appendix_condition(n_data: int = 100, spacing: float = 10.0, amplitude: float = 1.0,
                       length_scale: float = 10.0, noise: float = 0.01,
                       n_delays: int = 60_000, delays=None):
    """Condition numbers of the joint covariance over a delay grid on ``[-t_range, t_range]``."""
    grid = ObservationGrid(np.arange(n_data, dtype=float) * spacing)
    if delays is None:
        delays = np.linspace(-grid.t_range, grid.t_range, n_delays)
    theta = HyperParams(amplitude, length_scale, noise, 0.0)
    return analytic.condition_number_scan(grid, theta, delays)
