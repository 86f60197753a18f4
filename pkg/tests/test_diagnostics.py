import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delaylik import DelayLikelihood, HyperParams, ObservationGrid, sample_pair, stream
from delaylik.diagnostics import (
    LaplaceApprox, LaplaceError, StudyConfig, calibrate_f, classify_convergence,
    convergence_study, laplace_at_true_mode, study_tasks, worker_count,
)
from delaylik.samplers import WeightedSamples, grid_moments, posterior_quadrature


def point_mass(values, log_w=None):
    values = np.asarray(values, dtype=float)
    log_w = np.zeros(values.size) if log_w is None else log_w
    return WeightedSamples(values, log_w, np.zeros(values.size), 0.0, 0.0)


LAP = LaplaceApprox(mode=10.0, sd=0.01, curvature=-1e4)


# -- Laplace fit ------------------------------------------------------------

def test_laplace_on_quadratic():
    lap = laplace_at_true_mode(lambda d: -0.5 * ((d - 10.0) / 2.0) ** 2, 3.0)
    assert lap.mode == pytest.approx(10.0, abs=1e-6)
    assert lap.sd == pytest.approx(2.0, rel=1e-6)


def test_laplace_rejects_minimum():
    with pytest.raises(LaplaceError):
        laplace_at_true_mode(lambda d: 0.5 * (d - 1.0) ** 2, 0.0)


def test_laplace_leaving_prior_box_raises():
    with pytest.raises(LaplaceError):
        laplace_at_true_mode(lambda d: -0.5 * (d - 50.0) ** 2, 0.0, bounds=(-10.0, 10.0))


def test_laplace_impossible_neighbourhood_raises():
    with pytest.raises(LaplaceError):
        laplace_at_true_mode(lambda d: -math.inf, 0.0)


def test_laplace_on_fixture_matches_central_peak():
    theta = HyperParams(1.0, 10.0, 0.01, 10.0)
    grid = ObservationGrid.uniform(0.0, 1000.0, 100)
    like = DelayLikelihood(sample_pair(grid, theta, stream(2024, 0)), theta)
    lap = laplace_at_true_mode(like.scalar, 10.0, (-1000.0, 1000.0), t_range=1000.0)
    assert abs(lap.mode - 10.0) <= 2 * lap.sd
    x, dens, _ = posterior_quadrature(like, (-1000.0, 1000.0), 2_000_001)
    # a separate peak sits at the grid-coincidence delay, about 0.1 away
    near = np.abs(x - lap.mode) <= 5 * lap.sd
    _, sd = grid_moments(x[near], dens[near])
    assert lap.sd == pytest.approx(sd, rel=0.25)


# -- classification ---------------------------------------------------------

@pytest.mark.parametrize("mean, f, expected", [
    (10.0, 5.0, True),
    (10.04, 5.0, True),
    (10.06, 5.0, False),
    (9.96, 5.0, True),
    (9.9, 2.0, False),
])
def test_classify_examples(mean, f, expected):
    rec = classify_convergence(point_mass([mean]), LAP, f=f)
    assert rec.converged is expected
    assert rec.deviation == pytest.approx(abs(mean - 10.0) / 0.01)


def test_classify_edge_mode_mean():
    rec = classify_convergence(point_mass([1000.0]), LaplaceApprox(10.0, 1.0, -1.0), f=5.0)
    assert rec.deviation == pytest.approx(990.0)
    assert not rec.converged


def test_edge_failure_run_is_unconverged():
    from delaylik.samplers import NSConfig, PriorBox, nested_sampling
    theta = HyperParams(1.0, 10.0, 0.01, 10.0)
    grid = ObservationGrid.uniform(0.0, 1000.0, 100)
    like = DelayLikelihood(sample_pair(grid, theta, stream(2024, 0)), theta)
    run = nested_sampling(like, PriorBox.delay_only(1000.0), NSConfig(nlive=15, seed=1))
    lap = laplace_at_true_mode(like.scalar, 10.0, (-1000.0, 1000.0), t_range=1000.0)
    assert not classify_convergence(run, lap, f=100.0).converged


def test_classify_empty_raises():
    with pytest.raises(ValueError):
        classify_convergence(point_mass([]), LAP)


def test_calibrate_takes_largest_deviation():
    runs = [point_mass([10.0 + 0.01 * d]) for d in (0.1, 0.4, 2.3)]
    assert calibrate_f(runs, LAP) == pytest.approx(2.3)
    assert calibrate_f(runs[1:2], LAP) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        calibrate_f([], LAP)
    with pytest.raises(ValueError):
        calibrate_f(runs, [LAP, LAP])


@given(st.floats(min_value=9.0, max_value=11.0), st.floats(min_value=0.1, max_value=50.0),
       st.floats(min_value=0.0, max_value=50.0))
def test_classification_monotone_in_f(mean, f, extra):
    s = point_mass([mean])
    if classify_convergence(s, LAP, f=f).converged:
        assert classify_convergence(s, LAP, f=f + extra).converged


@given(st.lists(st.floats(min_value=-5, max_value=5), min_size=2, max_size=20),
       st.floats(min_value=-300, max_value=300))
def test_deviation_invariant_to_weight_scale(log_w, shift):
    values = np.linspace(9.9, 10.1, len(log_w))
    a = classify_convergence(point_mass(values, np.array(log_w)), LAP)
    b = classify_convergence(point_mass(values, np.array(log_w) + shift), LAP)
    assert a.deviation == pytest.approx(b.deviation, rel=1e-9, abs=1e-9)


# -- study ------------------------------------------------------------------

def test_study_config_validation():
    with pytest.raises(ValueError):
        StudyConfig(budgets=())
    with pytest.raises(ValueError):
        StudyConfig(samplers=("mcmc",))
    with pytest.raises(ValueError):
        StudyConfig(n_runs=0)


def test_worker_count_reads_environment(monkeypatch):
    monkeypatch.setenv("DELAYLIK_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.delenv("DELAYLIK_THREADS")
    assert worker_count() == 1


def test_study_seeds_do_not_depend_on_order():
    cfg = StudyConfig(samplers=("ns", "smc"), budgets=(10, 20), n_runs=3)
    seeds = [t[-1] for t in study_tasks(cfg)]
    assert len(set(seeds)) == len(seeds)
    assert study_tasks(cfg) == study_tasks(cfg)


@pytest.mark.slow
def test_study_is_deterministic_and_worker_independent():
    cfg = StudyConfig(samplers=("ns", "smc"), budgets=(10,), t_ranges=(200.0,), n_runs=2,
                      n_data=30, base_seed=9, workers=1)
    serial = convergence_study(cfg)
    parallel = convergence_study(StudyConfig(**{**cfg.as_dict(), "workers": 2}))
    assert [r.as_row() for r in serial] == [r.as_row() for r in parallel]
    for row in serial:
        assert row.n_runs == 2
        assert 0.0 <= row.fraction <= 1.0
        means = [rec.posterior_mean for rec in row.records]
        assert all(np.isfinite(means))
