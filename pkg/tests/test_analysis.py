import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tscig.analysis import (
    PHI_LOWER_BOUND,
    TheoryParams,
    Variant,
    bias_check,
    compatibility_condition_check,
    crossover_sample_size,
    expected_bt_sdm,
    mc_pass,
    mc_quadratic_form_check,
    mc_sdm_tail_check,
    quadratic_form_tail_bound,
    sdm_tail_bound,
    sup_estimation_error,
    theorem_bound_check,
)
from tscig.errors import InvalidParameterError
from tscig.procgen import ProcessModel, analytic_sdm, bivariate_var1, random_sparse_covariance, simulate
from tscig.spectral import SdmGrid, bt_sdm, make_gaussian_window, make_window, uniform_grid


def test_sup_error_examples():
    truth = analytic_sdm(ProcessModel.white_noise(3, 1.5), 16)
    assert sup_estimation_error(truth, truth) == 0.0
    M = truth.matrices.copy()
    M[5, 1, 2] += 0.3
    assert sup_estimation_error(SdmGrid(truth.thetas, M), truth) == pytest.approx(0.3)
    with pytest.raises(InvalidParameterError):
        sup_estimation_error(analytic_sdm(ProcessModel.white_noise(3), 8), truth)


def test_sup_error_shrinks_with_N():
    m = ProcessModel.fir_ma(random_sparse_covariance(4, 2, 0.5, seed=0))
    th = uniform_grid(256)
    truth = analytic_sdm(m, th)

    def median_err(N):
        w = make_gaussian_window(44, N)
        return np.median([sup_estimation_error(bt_sdm(simulate(m, N, seed=s), w, th), truth) for s in range(20)])

    assert median_err(8192) < median_err(4096)


TP = TheoryParams(N=1.0, p=64, s_max=3, rho_min=0.5, U=2.0, delta=0.1, window_l1=10.0)


def test_params_validation():
    with pytest.raises(InvalidParameterError):
        TheoryParams(N=10, p=4, s_max=1, rho_min=0.5, U=0.5, delta=0.1, window_l1=1)
    with pytest.raises(InvalidParameterError):
        TheoryParams(N=10, p=4, s_max=1, rho_min=0.5, U=2, delta=1.5, window_l1=1)
    with pytest.raises(InvalidParameterError):
        TheoryParams(N=10, p=4, s_max=0, rho_min=0.5, U=2, delta=0.1, window_l1=1)


def test_margin_formula():
    tp = TP.with_N(1e13)
    expected = 1e13 * (0.5 / 256) ** 2 / (8 * 27 * 100 * 16) - math.log(2e13) - math.log(2 * 64 ** 2 / 0.1)
    assert theorem_bound_check(tp).margin_n == pytest.approx(expected, rel=1e-12)
    full = theorem_bound_check(tp, Variant.FULL_GRAPH).margin_n
    assert full == pytest.approx(expected - math.log(64), rel=1e-12)


def test_crossover_example_and_ordering():
    n = crossover_sample_size(TP)
    assert not theorem_bound_check(TP.with_N(n - 1)).satisfied
    assert theorem_bound_check(TP.with_N(n)).satisfied
    assert crossover_sample_size(TP, "full-graph") >= n


def test_doubling_N_increases_margin_beyond_minimum():
    for N in [1e12, 4e12, 1e14]:
        assert theorem_bound_check(TP.with_N(2 * N)).margin_n > theorem_bound_check(TP.with_N(N)).margin_n


def test_moment_condition():
    ok = TheoryParams(N=10, p=4, s_max=1, rho_min=0.5, U=1, delta=0.1, window_l1=1, mu_h1=0.5 / 256)
    bad = TheoryParams(N=10, p=4, s_max=1, rho_min=0.5, U=1, delta=0.1, window_l1=1, mu_h1=0.5 / 255)
    assert theorem_bound_check(ok).moment_ok
    assert not theorem_bound_check(bad).moment_ok


@settings(max_examples=40, deadline=None)
@given(
    p=st.integers(2, 500), s=st.integers(1, 6), rho=st.floats(0.01, 1.0), U=st.floats(1.0, 20.0),
    delta=st.floats(0.001, 0.9), l1=st.floats(1.0, 50.0),
)
def test_crossover_monotone_property(p, s, rho, U, delta, l1):
    tp = TheoryParams(N=1, p=p, s_max=s, rho_min=rho, U=U, delta=delta, window_l1=l1)
    n = crossover_sample_size(tp)
    assert theorem_bound_check(tp.with_N(n)).satisfied
    if n > 1:
        assert not theorem_bound_check(tp.with_N(n - 1)).satisfied
    for k in [2, 10, 1000]:
        assert theorem_bound_check(tp.with_N(n * k)).satisfied


def test_compatibility_examples():
    assert compatibility_condition_check(0.0, 7)
    assert compatibility_condition_check(1 / 96, 3)
    assert not compatibility_condition_check(1 / 95, 3)
    assert PHI_LOWER_BOUND == pytest.approx(1 / math.sqrt(2))
    with pytest.raises(InvalidParameterError):
        compatibility_condition_check(-1.0, 3)


@pytest.mark.xfail(strict=True, reason="grid estimation error stays near 2 (normalised units) at N=16384; "
                                        "the 1/96 level needs orders of magnitude more samples")
def test_compatibility_large_N_fir():
    m = ProcessModel.fir_ma(random_sparse_covariance(16, 3, 0.95, seed=7))
    th = uniform_grid(256)
    L = analytic_sdm(m, th).eigenvalues().min()
    m = m.scaled(1 / L)
    truth = analytic_sdm(m, th)
    w = make_gaussian_window(44, 16384)
    ok = [compatibility_condition_check(sup_estimation_error(bt_sdm(simulate(m, 16384, seed=s), w, th), truth), 3)
          for s in range(10)]
    assert np.mean(ok) >= 0.9


def test_tail_bound_formulas():
    b = sdm_tail_bound(1024, 2, 1.0, 1.0, 0.45)
    assert b == pytest.approx(2 * math.exp(-1024 * 0.45 ** 2 / 8 + 2 * math.log(2) + math.log(2048)))
    assert sdm_tail_bound(10, 5, 3.0, 2.0, 0.1) == 1.0
    assert quadratic_form_tail_bound(64, 0.45, 1.0, 1.0) == pytest.approx(2 * math.exp(-64 * 0.45 ** 2 / 8))
    assert quadratic_form_tail_bound(64, 0.45, 1.0, 2.0) > quadratic_form_tail_bound(64, 0.45, 1.0, 1.0)


def test_mc_pass_slack():
    assert mc_pass(0.0, 0.0, 100)
    assert not mc_pass(0.01, 0.0, 100)
    assert mc_pass(0.5, 0.45, 100)  # 3 SE is about 0.149
    assert mc_pass(1.0, 1.0, 10)


def test_sdm_tail_white_gaussian_window():
    r = mc_sdm_tail_check(ProcessModel.white_noise(2), make_gaussian_window(44, 256), 256, 0.4, 500, seed=1)
    assert r.passed and r.bound == 1.0


def test_sdm_tail_delta_window_nonvacuous():
    r = mc_sdm_tail_check(ProcessModel.white_noise(2), make_window([1.0], 1024), 1024, 0.45, 500, seed=2)
    assert r.bound < 1e-6
    assert r.passed


def test_sdm_tail_monotone_in_nu():
    w = make_gaussian_window(44, 128)
    probs = [mc_sdm_tail_check(bivariate_var1(), w, 128, nu, 60, seed=3).empirical for nu in [0.1, 0.25, 0.45]]
    assert probs[0] >= probs[1] >= probs[2]


def test_quadratic_form_suites():
    N = 64
    r = mc_quadratic_form_check(np.eye(2 * N), np.eye(N), 0.45, 2000, seed=4)
    assert r.passed and r.bound == pytest.approx(0.3958, abs=1e-4)
    r2 = mc_quadratic_form_check(np.eye(2 * N), 2 * np.eye(N), 0.45, 2000, seed=4)
    assert r2.passed and r2.bound >= r.bound
    I = np.eye(N)
    r3 = mc_quadratic_form_check(np.block([[I, I], [I, I]]), I, 0.45, 2000, seed=5)
    assert r3.passed
    r0 = mc_quadratic_form_check(np.eye(2 * N), np.zeros((N, N)), 0.45, 500, seed=6)
    assert r0.empirical == 0.0


def test_quadratic_form_rejects_indefinite():
    C = np.eye(4)
    C[0, 0] = -1
    with pytest.raises(InvalidParameterError):
        mc_quadratic_form_check(C, np.eye(2), 0.3, 10)
    with pytest.raises(InvalidParameterError):
        mc_quadratic_form_check(np.eye(4), np.eye(2), 0.6, 10)


def test_quadratic_form_mean_centering():
    # y = x: E[x^T x] = N, so q - E q is centred
    N = 32
    I = np.eye(N)
    r = mc_quadratic_form_check(np.block([[I, I], [I, I]]), I, 0.45, 1000, seed=8)
    assert r.empirical < 0.2


def test_expected_bt_matches_monte_carlo_and_bias_bound():
    res = bias_check(bivariate_var1(), make_gaussian_window(44, 256), 256, 500, seed=9)
    assert res.passed
    assert abs(res.empirical_bias - res.closed_form_bias) <= res.slack
    assert res.closed_form_bias <= res.mu_h1


def test_expected_bt_delta_window_is_lag_zero():
    E = expected_bt_sdm(bivariate_var1(), make_window([1.0], 16), 16, uniform_grid(4))
    np.testing.assert_allclose(E.matrices, np.broadcast_to(2 * np.eye(2), (4, 2, 2)), atol=1e-10)


def test_bias_check_fir():
    m = ProcessModel.fir_ma(random_sparse_covariance(3, 1, 0.5, seed=1))
    res = bias_check(m, make_gaussian_window(44, 128), 128, 500, seed=10)
    assert res.passed
