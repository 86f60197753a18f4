import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaylik import (EnsembleSpec, HyperParams, ObservationGrid, build_joint_covariance,
                      log_likelihood, sample_ensemble)
from delaylik.analytic import (averaged_likelihood_moments, averaged_loglik,
                               averaged_loglik_scan, bayes_factor_matrix,
                               bayes_factor_spectrum, condition_number, condition_number_scan,
                               large_delay_moments, largescale_length_loglik,
                               regularised_averaged_loglik, zero_delay_moments)


def _mc_loglik(grid, theta_model, theta_true, m=10_000, seed=1):
    pairs = sample_ensemble(EnsembleSpec(theta_true, grid, m, seed))
    return np.array([log_likelihood(p, theta_model) for p in pairs])


# --- averaged log-likelihood ------------------------------------------------------

def test_matched_model_mean_and_variance():
    g = ObservationGrid.uniform(0, 100, 9)
    th = HyperParams(1.0, 10.0, 0.1, 20.0)
    res = averaged_loglik(g, th, th)
    n = 18
    _, logdet = np.linalg.slogdet(2 * np.pi * build_joint_covariance(g, th))
    assert res.e_loglik == pytest.approx(-n / 2 - 0.5 * logdet, rel=1e-12)
    assert res.var_exact == pytest.approx(n / 2, rel=1e-12)


def test_monte_carlo_oracle_example():
    g = ObservationGrid.uniform(0, 1000, 5)
    true = HyperParams(1.0, 10.0, 0.01, 10.0)
    model = true.with_delay(500.0)
    ll = _mc_loglik(g, model, true)
    res = averaged_loglik(g, model, true)
    se = ll.std(ddof=1) / math.sqrt(ll.size)
    assert abs(ll.mean() - res.e_loglik) < 4 * se
    assert ll.var(ddof=1) == pytest.approx(res.var_exact, rel=0.2)


@settings(max_examples=4, deadline=None)
@given(st.integers(1, 8), st.floats(-200, 200), st.floats(-200, 200), st.floats(2, 40),
       st.floats(0.05, 1.0), st.integers(0, 2**32))
def test_monte_carlo_oracle_random_configs(n, d_model, d_true, ell, noise, seed):
    g = ObservationGrid.uniform(0, 200, n)
    true = HyperParams(1.0, 10.0, 0.1, d_true)
    model = HyperParams(1.2, ell, noise, d_model)
    ll = _mc_loglik(g, model, true, seed=seed)
    res = averaged_loglik(g, model, true)
    se = ll.std(ddof=1) / math.sqrt(ll.size)
    assert abs(ll.mean() - res.e_loglik) < 4 * se
    assert ll.var(ddof=1) == pytest.approx(res.var_exact, rel=0.2)


def test_variance_forms_agree_only_for_identity_covariance():
    g = ObservationGrid(np.array([0.0]))
    unit = HyperParams(math.sqrt(0.75), 10.0, 0.5, 2000.0)  # joint covariance = I
    res = averaged_loglik(g, unit, unit)
    assert res.var_elementwise == pytest.approx(res.var_exact, rel=1e-9)
    # rescaling the covariance leaves the quadratic-form variance unchanged,
    # while the element-wise expression scales with it
    scaled = HyperParams(math.sqrt(3.0), 10.0, 1.0, 2000.0)
    res4 = averaged_loglik(g, scaled, scaled)
    assert res4.var_exact == pytest.approx(res.var_exact, rel=1e-12)
    assert res4.var_elementwise == pytest.approx(4 * res.var_elementwise, rel=1e-12)


def test_singular_model_gives_sentinel():
    g = ObservationGrid.uniform(0, 100, 5)
    bad = HyperParams(1.0, 10.0, 0.0, 0.0)
    res = averaged_loglik(g, bad, HyperParams(1.0, 10.0, 0.1, 0.0))
    assert res.e_loglik == -math.inf and res.var_exact == -math.inf


# --- regularised form -------------------------------------------------------------

def test_regularised_self_subtraction_is_zero():
    g = ObservationGrid.uniform(0, 500, 20)
    th = HyperParams(1.0, 10.0, 0.01, 500.0)
    for d in (-300.0, 10.0, 500.0):
        assert regularised_averaged_loglik(g, d, th, th) == 0.0


def test_regularised_equals_difference_of_averages():
    g = ObservationGrid.uniform(0, 300, 15)
    th = HyperParams(1.0, 10.0, 0.05, 10.0)
    d = 37.0
    full = averaged_loglik(g, th.with_delay(d), th).e_loglik
    decor = averaged_loglik(g, th.with_delay(d), th.with_delay(300.0)).e_loglik
    assert regularised_averaged_loglik(g, d, th, th) == pytest.approx(full - decor, rel=1e-9)


def test_scan_columns_match_pointwise_calls():
    g = ObservationGrid.uniform(0, 200, 12)
    th = HyperParams(1.0, 10.0, 0.05, 10.0)
    d = np.array([-200.0, -20.0, 10.0, 150.0])
    scan = averaged_loglik_scan(g, th, th, d)
    for i, x in enumerate(d):
        res = averaged_loglik(g, th.with_delay(x), th)
        assert scan["e_loglik"][i] == pytest.approx(res.e_loglik, rel=1e-12)
        assert scan["sd_exact"][i] == pytest.approx(res.sd_exact, rel=1e-12)
        assert scan["e_loglik_reg"][i] == pytest.approx(
            regularised_averaged_loglik(g, x, th, th), rel=1e-9, abs=1e-12)
    with pytest.raises(ValueError):
        averaged_loglik_scan(g, th, th, [])


@pytest.mark.parametrize("n_small", [50, 100])
def test_edge_slope_grows_with_density(n_small):
    th = HyperParams(1.0, 10.0, 0.01, 10.0)
    d = np.linspace(500, 900, 401)
    slopes = []
    for n in (n_small, 2 * n_small):
        g = ObservationGrid.uniform(0, 1000, n)
        e = averaged_loglik_scan(g, th, th, d, with_elementwise=False)["e_loglik"]
        slopes.append(np.polyfit(d, e, 1)[0])
    assert slopes[1] > slopes[0]


# --- likelihood moments -----------------------------------------------------------

def test_scalar_zero_delay_moment():
    g = ObservationGrid(np.array([0.0]))
    for s in (0.3, 1e-2, 1e-4):
        th = HyperParams(1.0, 10.0, s, 0.0)
        log_el, _ = averaged_likelihood_moments(g, th, th)
        expected = -math.log(4 * math.pi) - math.log(s) - 0.5 * math.log(2 + s * s)
        assert log_el == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_zero_delay_closed_forms(n):
    g = ObservationGrid(np.arange(n) * 10.0)
    for s in (1e-2, 1e-3):
        th = HyperParams(1.0, 10.0, s, 0.0)
        general = averaged_likelihood_moments(g, th, th)
        closed = zero_delay_moments(g, th)
        assert closed[0] == pytest.approx(general[0], rel=1e-8)
        assert closed[1] == pytest.approx(general[1], rel=1e-8)


def test_small_noise_scaling():
    g = ObservationGrid(np.arange(4) * 10.0)
    sig = np.array([1e-2, 1e-3, 1e-4])
    vals = [averaged_likelihood_moments(g, HyperParams(1, 10, s, 0), HyperParams(1, 10, s, 0))[0]
            for s in sig]
    slope = np.polyfit(np.log(sig), vals, 1)[0]
    assert slope == pytest.approx(-4.0, rel=0.01)


def test_large_model_delay_limit():
    g = ObservationGrid(np.arange(4) * 100.0)
    true = HyperParams(1.0, 10.0, 1e-3, 0.0)
    model = true.with_delay(1e6)
    general = averaged_likelihood_moments(g, model, true)
    limit = large_delay_moments(g, true)
    assert general[0] == pytest.approx(limit[0], rel=0.01)
    assert general[1] == pytest.approx(limit[1], rel=0.01)


# --- Bayes-factor spectrum ---------------------------------------------------------

def test_spectrum_single_point():
    g = ObservationGrid(np.array([0.0]))
    rep = bayes_factor_spectrum(g, 1.0, 10.0, 0.01)
    r = 2 / (1 + 1e-4)
    np.testing.assert_allclose(rep.rho, [1 - r, 1 + r], rtol=1e-12)
    assert rep.min_rho == pytest.approx(-0.9998, abs=1e-4)
    assert not rep.is_positive_definite


def test_spectrum_large_noise_is_positive():
    g = ObservationGrid.uniform(0, 100, 5)
    rep = bayes_factor_spectrum(g, 1.0, 10.0, 1e4)
    np.testing.assert_allclose(rep.rho, 1.0, atol=1e-6)
    assert rep.is_positive_definite and rep.min_rho == min(rep.rho)


@pytest.mark.parametrize("sigma", [1e-2, 3e-2, 1e-1])
def test_spectrum_matches_direct_eigendecomposition(sigma):
    g = ObservationGrid.uniform(0, 1000, 50)
    rep = bayes_factor_spectrum(g, 1.0, 10.0, sigma)
    direct = np.sort(np.linalg.eigvals(bayes_factor_matrix(g, 1.0, 10.0, sigma)).real)
    assert np.abs(direct - rep.rho).max() < 10 * sigma**4
    assert rep.min_rho < 0


# --- large-sample length-scale likelihood ------------------------------------------

def test_lengthscale_at_truth():
    a = math.exp(-1.0)
    expected = -0.5 * (1 + math.log(1 - a * a) + math.log(2 * math.pi))
    assert largescale_length_loglik(10.0, 10.0, 10.0) == pytest.approx(expected, abs=1e-12)


def test_lengthscale_small_limit():
    assert largescale_length_loglik(1e-3, 10.0, 10.0) == pytest.approx(-1.41894, abs=1e-5)


def test_lengthscale_argmax_and_asymptote():
    ell = np.linspace(0.1, 100.0, 1000)
    val = largescale_length_loglik(ell, 10.0, 10.0)
    step = ell[1] - ell[0]
    assert abs(ell[np.argmax(val)] - 10.0) <= step
    b = math.exp(-1.0)
    assert largescale_length_loglik(1000.0, 10.0, 10.0) == pytest.approx(
        -(1 - b) * 1000.0 / 20.0, rel=0.05)


def test_lengthscale_pole():
    with pytest.raises(ValueError):
        largescale_length_loglik(math.inf, 10.0, 10.0)
    with pytest.raises(ValueError):
        largescale_length_loglik(0.0, 10.0, 10.0)


# --- condition numbers --------------------------------------------------------------

def test_condition_of_identity():
    assert condition_number(np.eye(5)) == 1.0
    assert condition_number(np.diag([1.0, 0.0])) == math.inf


def test_condition_spikes_and_noise_dependence():
    g = ObservationGrid(np.arange(100) * 10.0)
    spikes = {}
    for sigma in (0.01, 0.1):
        th = HyperParams(1.0, 10.0, sigma, 0.0)
        rows = dict(condition_number_scan(g, th, [10.0 * k for k in range(1, 6)]
                                          + [10.0 * k + 5 for k in range(1, 6)]))
        spikes[sigma] = [rows[10.0 * k] for k in range(1, 6)]
        if sigma == 0.01:
            for k in range(1, 6):
                assert rows[10.0 * k] >= 10 * rows[10.0 * k + 5]
        assert all(c >= 1 for c in rows.values())
    assert all(a > b for a, b in zip(spikes[0.01], spikes[0.1]))
