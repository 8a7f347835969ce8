import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import fista_group_lasso, objective_direct, random_instance
from tscig.errors import InvalidParameterError
from tscig.mlasso import (
    GroupCoefficients,
    GroupProblem,
    SolverOptions,
    assemble_all_group_problems,
    assemble_group_problem,
    group_soft_threshold,
    kkt_violation,
    mlasso_objective,
    quadrature_nodes,
    solve_mlasso_admm,
    solve_mlasso_admm_batch,
)
from tscig.procgen import ProcessModel, random_sparse_covariance, simulate
from tscig.spectral import bt_sdm, make_gaussian_window, permutation_for_node


def test_soft_threshold_examples():
    np.testing.assert_allclose(group_soft_threshold(np.array([3.0, 4.0]), 2.0), [1.8, 2.4])
    assert not group_soft_threshold(np.array([0.3, 0.4]), 0.5).any()
    assert not group_soft_threshold(np.array([0.3, 0.4]), 0.6).any()
    v = np.array([1 + 1j, -2j])
    np.testing.assert_array_equal(group_soft_threshold(v, 0.0), v)
    assert not group_soft_threshold(np.zeros(3), 0.0).any()
    with pytest.raises(InvalidParameterError):
        group_soft_threshold(v, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=6), st.floats(0, 5))
def test_soft_threshold_is_prox(vals, kappa):
    # prox of kappa*||.||: minimiser of 0.5||x - v||^2 + kappa||x||
    v = np.array(vals)
    x = group_soft_threshold(v, kappa)
    f = lambda z: 0.5 * np.sum((z - v) ** 2) + kappa * np.linalg.norm(z)
    rng = np.random.default_rng(0)
    for _ in range(5):
        assert f(x) <= f(x + 1e-3 * rng.standard_normal(v.size)) + 1e-12
    assert np.linalg.norm(x) <= np.linalg.norm(v) + 1e-12


def test_quadrature_nodes():
    nodes = quadrature_nodes(2, 4)
    np.testing.assert_allclose(nodes[0], [1 / 16, 3 / 16, 5 / 16, 7 / 16])
    np.testing.assert_allclose(nodes[1], 0.5 + nodes[0])
    with pytest.raises(InvalidParameterError):
        quadrature_nodes(0, 3)


def test_group_coefficients_norms():
    b = np.array([[3.0, 0.0], [4.0, 1j]])
    gc = GroupCoefficients(b)
    np.testing.assert_allclose(gc.group_norms, [5 / np.sqrt(2), 1 / np.sqrt(2)], atol=1e-12)
    with pytest.raises(InvalidParameterError):
        GroupCoefficients(np.array([[np.inf]]))


def test_problem_validation():
    with pytest.raises(InvalidParameterError):
        GroupProblem(np.zeros((2, 3, 3)), np.zeros((2, 2)))


def test_assembly_zero_data():
    prob = assemble_group_problem(np.zeros((3, 6)), make_gaussian_window(1.0, 6), 1, F=3, quad_points=2)
    assert not prob.grams.any() and not prob.corrs.any()


def test_assembly_single_bin_is_mean_of_permuted_sdm():
    X = np.random.default_rng(0).standard_normal((4, 16))
    w = make_gaussian_window(7.0, 16)
    Q = 6
    nodes = quadrature_nodes(1, Q)[0]
    for r in range(4):
        prob = assemble_group_problem(X, w, r, F=1, quad_points=Q)
        perm = permutation_for_node(4, r)
        S = bt_sdm(X[perm], w, nodes).matrices.mean(axis=0)
        np.testing.assert_allclose(prob.grams[0], S[1:, 1:], atol=1e-10)
        np.testing.assert_allclose(prob.corrs[0], S[1:, 0], atol=1e-10)


def test_assembly_bins_integrate_over_interval():
    X = np.random.default_rng(1).standard_normal((3, 10))
    w = make_gaussian_window(2.5, 10)
    prob = assemble_group_problem(X, w, 0, F=2, quad_points=3)
    S = bt_sdm(X, w, quadrature_nodes(2, 3)[1]).matrices.mean(axis=0)
    # bin weight is its width 1/F
    np.testing.assert_allclose(prob.grams[1], S[1:, 1:] / 2, atol=1e-10)


def test_shared_assembly_matches_per_node():
    X = np.random.default_rng(2).standard_normal((5, 12))
    w = make_gaussian_window(4.0, 12)
    allp = assemble_all_group_problems(X, w, F=3, quad_points=4)
    for r in range(5):
        one = assemble_group_problem(X, w, r, F=3, quad_points=4)
        np.testing.assert_allclose(allp[r].grams, one.grams, atol=1e-12)
        np.testing.assert_allclose(allp[r].corrs, one.corrs, atol=1e-12)


def test_quadrature_convergence_smooth_fir():
    C0 = random_sparse_covariance(5, 2, 0.5, seed=3)
    X = simulate(ProcessModel.fir_ma(C0), 128, seed=4)
    w = make_gaussian_window(44, 128)
    a = assemble_group_problem(X, w, 2, F=4, quad_points=8)
    b = assemble_group_problem(X, w, 2, F=4, quad_points=16)
    assert np.max(np.abs(a.grams - b.grams)) < 1e-3


def test_grams_hermitian_psd():
    X = np.random.default_rng(5).standard_normal((4, 20))
    for prob in assemble_all_group_problems(X, make_gaussian_window(11.0, 20), F=4):
        assert np.max(np.abs(prob.grams - np.conj(np.swapaxes(prob.grams, 1, 2)))) <= 1e-10
        assert np.linalg.eigvalsh(prob.grams).min() >= -1e-8


def test_objective_matches_direct():
    rng = np.random.default_rng(6)
    G, c = random_instance(rng, 3, 4)
    b = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    assert mlasso_objective(GroupProblem(G, c), b, 0.7) == pytest.approx(objective_direct(G, c, b, 0.7), rel=1e-12)


def _lam_max(prob):
    return 2.0 * np.max(np.linalg.norm(prob.corrs, axis=0))


def test_lambda_large_gives_exact_zero():
    rng = np.random.default_rng(7)
    G, c = random_instance(rng, 2, 3)
    prob = GroupProblem(G, c)
    coefs, rep = solve_mlasso_admm(prob, _lam_max(prob) * 1.0001)
    assert rep.converged
    assert np.all(coefs.blocks == 0)


def test_lambda_zero_is_direct_solve():
    rng = np.random.default_rng(8)
    G, c = random_instance(rng, 3, 4)
    coefs, rep = solve_mlasso_admm(GroupProblem(G, c), 0.0, SolverOptions(abs_tol=1e-12, rel_tol=1e-12))
    assert rep.converged
    direct = np.stack([np.linalg.solve(G[f], c[f]) for f in range(3)])
    assert np.max(np.abs(coefs.blocks - direct)) <= 1e-8


def test_matches_proximal_gradient_reference():
    rng = np.random.default_rng(9)
    G, c = random_instance(rng, 2, 3)
    prob = GroupProblem(G, c)
    lam = 0.3 * _lam_max(prob)
    coefs, rep = solve_mlasso_admm(prob, lam)
    ref = fista_group_lasso(G, c, lam)
    assert rep.converged
    assert mlasso_objective(prob, coefs.blocks, lam) - objective_direct(G, c, ref, lam) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 31), F=st.integers(1, 3), q=st.integers(1, 4), frac=st.floats(0.01, 1.2),
       deficient=st.booleans())
def test_optimality_certificate(seed, F, q, frac, deficient):
    G, c = random_instance(np.random.default_rng(seed), F, q, rank_deficient=deficient)
    prob = GroupProblem(G, c)
    lam = frac * _lam_max(prob)
    coefs, rep = solve_mlasso_admm(prob, lam)
    assert rep.converged
    active, inactive = kkt_violation(prob, coefs.blocks, lam)
    assert active <= 1e-5
    assert inactive <= lam / 2 * 1e-5 + 1e-12
    obj = rep.objective
    assert obj <= mlasso_objective(prob, np.zeros_like(c), lam) + 1e-12
    if not deficient:
        free = np.stack([np.linalg.solve(G[f], c[f]) for f in range(F)])
        assert obj <= mlasso_objective(prob, free, lam) + 1e-10


def test_homogeneity():
    G, c = random_instance(np.random.default_rng(10), 3, 4)
    prob = GroupProblem(G, c)
    lam = 0.4 * _lam_max(prob)
    tight = SolverOptions(abs_tol=1e-12, rel_tol=1e-12)
    base = solve_mlasso_admm(prob, lam, tight)[0].blocks
    for s in [0.25, 3.0]:
        scaled = solve_mlasso_admm(prob.scaled(s), s * lam, tight)[0].blocks
        assert np.max(np.abs(scaled - base)) <= 1e-8


def test_smooth_part_nondecreasing_in_lambda():
    G, c = random_instance(np.random.default_rng(11), 3, 4)
    prob = GroupProblem(G, c)
    lams = np.linspace(0.0, 1.1 * _lam_max(prob), 10)
    tight = SolverOptions(abs_tol=1e-12, rel_tol=1e-11)
    smooth = [mlasso_objective(prob, solve_mlasso_admm(prob, l, tight)[0].blocks, 0.0) for l in lams]
    assert all(b >= a - 1e-9 for a, b in zip(smooth, smooth[1:]))


def test_batch_equals_individual():
    rng = np.random.default_rng(12)
    probs = [GroupProblem(*random_instance(rng, 2, 3)) for _ in range(4)]
    lams = [0.1, 0.5, 1.0, 2.0]
    bc, br = solve_mlasso_admm_batch(probs, lams)
    for p, l, c, r in zip(probs, lams, bc, br):
        c1, r1 = solve_mlasso_admm(p, l)
        np.testing.assert_array_equal(c.blocks, c1.blocks)
        assert r.iterations == r1.iterations


def test_iteration_cap_reports_nonconvergence():
    G, c = random_instance(np.random.default_rng(13), 2, 3)
    coefs, rep = solve_mlasso_admm(GroupProblem(G, c), 0.1, SolverOptions(max_iter=2))
    assert not rep.converged and rep.iterations == 2


def test_converged_implies_residuals_below_tolerance():
    G, c = random_instance(np.random.default_rng(14), 3, 3)
    _, rep = solve_mlasso_admm(GroupProblem(G, c), 0.2)
    assert rep.converged
    assert rep.primal_residual <= rep.primal_tol and rep.dual_residual <= rep.dual_tol


def test_rejects_nonfinite_and_negative_lambda():
    G, c = random_instance(np.random.default_rng(15), 1, 2)
    with pytest.raises(InvalidParameterError):
        solve_mlasso_admm(GroupProblem(G, c), -1.0)
    c[0, 0] = np.nan
    with pytest.raises(InvalidParameterError):
        solve_mlasso_admm(GroupProblem(G, c), 1.0)


def test_unbounded_problem_is_not_reported_converged():
    # c has a component outside range(G): the objective has no minimiser for small lambda
    G = np.zeros((1, 2, 2), dtype=complex)
    G[0, 0, 0] = 1.0
    c = np.array([[1.0, 1.0 + 0j]])
    coefs, rep = solve_mlasso_admm(GroupProblem(G, c), 0.5, SolverOptions(max_iter=500))
    assert not rep.converged
    assert np.all(np.isfinite(coefs.blocks))
