import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.integrate import quad
from scipy.optimize import minimize

from orhorls.sparsity import (OutlierPenalty, OutlierSolver, SolverBudget, mcp_threshold,
                              outlier_objective, penalty_value, prox_l1_mat, soft_threshold,
                              solve_outlier_admm, solve_outlier_cd, solve_outlier_fmhsdm,
                              solve_outlier_gist)

from conftest import random_spd

BIG = SolverBudget(5000)
L1 = OutlierPenalty("l1", 1.0)
MCP = OutlierPenalty("mcp", 1.0, 4.0)


def grid_argmin(f, lo, hi, step=1e-4):
    x = np.arange(lo, hi + step, step)
    return x[np.argmin(f(x))]


def l1_reference(r, W, lam):
    """Interior reference: o = a - b with a, b >= 0, a smooth bound-constrained QP."""
    n = r.size

    def fun(z):
        a, b = z[:n], z[n:]
        d = a - b - r
        g = W @ d
        return 0.5 * d @ g + lam * z.sum(), np.concatenate([g + lam, -g + lam])

    z0 = np.concatenate([np.maximum(r, 0), np.maximum(-r, 0)])
    res = minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=[(0, None)] * (2 * n),
                   options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
    return res.x[:n] - res.x[n:]


# --- penalty and scalar maps ---------------------------------------------------

def test_penalty_examples():
    assert penalty_value(OutlierPenalty("l1", 2.0), np.array([1.0, -3.0])) == 8.0
    p = OutlierPenalty("mcp", 1.0, 2.0)
    assert penalty_value(p, np.array([0.5])) == pytest.approx(0.4375)
    assert penalty_value(p, np.array([10.0])) == pytest.approx(1.0)


@pytest.mark.parametrize("t", [0.3, 1.5, 3.9, 7.0])
def test_mcp_matches_integrated_derivative(t):
    lam, theta = 1.3, 3.0
    dens, _ = quad(lambda s: max(lam - s / theta, 0.0), 0, t, points=[theta * lam])
    assert penalty_value(OutlierPenalty("mcp", lam, theta), np.array([-t])) == pytest.approx(dens)


def test_penalty_validation():
    with pytest.raises(ValueError):
        OutlierPenalty("l1", 0.0)
    with pytest.raises(ValueError):
        OutlierPenalty("mcp", 1.0, 0.0)
    with pytest.raises(ValueError):
        OutlierPenalty("scad", 1.0)
    with pytest.raises(ValueError):
        SolverBudget(0)


def test_soft_threshold_examples():
    assert soft_threshold(3.0, 1.0) == 2.0
    assert soft_threshold(0.5, 1.0) == 0.0
    assert soft_threshold(-0.7, 0.0) == -0.7
    with pytest.raises(ValueError):
        soft_threshold(1.0, -1.0)


def test_mcp_threshold_examples():
    assert mcp_threshold(0.9, 1.0, 4.0, 1.0) == 0.0
    assert mcp_threshold(5.0, 1.0, 4.0, 1.0) == 5.0
    assert mcp_threshold(2.0, 1.0, 4.0, 1.0) == pytest.approx(4.0 / 3.0)
    with pytest.raises(ValueError):
        mcp_threshold(1.0, 1.0, 2.0, 0.5)


@given(st.floats(-20, 20), st.floats(0.0, 5.0))
def test_soft_threshold_grid_oracle(t, tau):
    x = grid_argmin(lambda x: 0.5 * (x - t) ** 2 + tau * np.abs(x), -abs(t) - 1, abs(t) + 1,
                    1e-3)
    assert abs(soft_threshold(t, tau) - x) <= 1e-3


@given(st.floats(-20, 20), st.floats(0.1, 3.0), st.floats(1.5, 6.0), st.floats(0.5, 3.0))
def test_mcp_threshold_grid_oracle(t, lam, theta, c):
    assume(c * theta > 1.05)
    pen = OutlierPenalty("mcp", lam, theta)
    f = lambda x: 0.5 * c * (x - t) ** 2 + np.array([penalty_value(pen, np.array([v]))
                                                       for v in np.atleast_1d(x)])
    x = grid_argmin(lambda x: 0.5 * c * (x - t) ** 2 + _mcp_vec(x, lam, theta),
                    -2 * abs(t) - 2 * theta * lam, 2 * abs(t) + 2 * theta * lam, 1e-3)
    got = mcp_threshold(t, lam, theta, c)
    # ties at the region boundaries may pick either minimiser
    assert abs(got - x) <= 2e-3 or f(got)[0] <= f(x)[0] + 1e-9


def _mcp_vec(x, lam, theta):
    a = np.abs(x)
    return np.where(a <= theta * lam, lam * a - a * a / (2 * theta), 0.5 * theta * lam**2)


@given(st.floats(-10, 10), st.floats(0.0, 3.0))
def test_soft_threshold_properties(t, tau):
    s = soft_threshold(t, tau)
    assert abs(s) <= abs(t)
    assert s == 0.0 or np.sign(s) == np.sign(t)


def test_prox_l1_mat():
    F = np.array([[3.0, -0.5], [0.0, -2.0]])
    np.testing.assert_array_equal(prox_l1_mat(F, 0.0), F)
    np.testing.assert_array_equal(prox_l1_mat(F, 1.0), [[2.0, 0.0], [0.0, -1.0]])
    np.testing.assert_array_equal(prox_l1_mat(np.zeros((2, 2)), 1.0), np.zeros((2, 2)))


# --- vector solvers --------------------------------------------------------------

def test_separable_examples():
    r, W = np.array([3.0, 0.5]), np.eye(2)
    np.testing.assert_allclose(solve_outlier_admm(r, W, 1.0, BIG), [2.0, 0.0], atol=1e-10)
    np.testing.assert_allclose(solve_outlier_fmhsdm(r, W, 1.0, BIG), [2.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(solve_outlier_cd(r, W, L1, BIG), [2.0, 0.0], atol=1e-12)


def test_gist_scalar_examples():
    W = np.eye(1)
    assert solve_outlier_gist(np.array([5.0]), W, MCP)[0] == pytest.approx(5.0)
    assert solve_outlier_gist(np.array([0.5]), W, MCP)[0] == 0.0
    np.testing.assert_array_equal(solve_outlier_gist(np.zeros(3), np.eye(3), MCP), 0.0)


@pytest.mark.parametrize("solver", ["admm", "fmhsdm", "cd"])
def test_zero_residual(solver):
    o = OutlierSolver(np.eye(3), L1, solver)(np.zeros(3))
    np.testing.assert_array_equal(o, 0.0)


def test_cd_diagonal_matches_soft_threshold(rng):
    d = rng.uniform(0.5, 3.0, 6)
    r = rng.standard_normal(6) * 3
    np.testing.assert_allclose(solve_outlier_cd(r, np.diag(d), L1, SolverBudget(3)),
                               soft_threshold(r, 1.0 / d), atol=1e-14)
    np.testing.assert_allclose(solve_outlier_cd(r, np.diag(d), MCP, SolverBudget(3)),
                               [mcp_threshold(t, 1.0, 4.0, c) for t, c in zip(r, d)],
                               atol=1e-14)


def test_deactivation_gives_exact_zeros(rng):
    W = random_spd(rng, 8)
    r = rng.standard_normal(8)
    lam = 1.01 * np.abs(W @ r).max()
    for o in (solve_outlier_admm(r, W, lam), solve_outlier_fmhsdm(r, W, lam),
              solve_outlier_cd(r, W, OutlierPenalty("l1", lam))):
        assert np.all(o == 0.0)
    # MCP: with lam = max|Wr| the origin is a stationary point GIST accepts
    o = solve_outlier_gist(r, W, OutlierPenalty("mcp", lam, 4.0))
    assert outlier_objective(o, r, W, OutlierPenalty("mcp", lam, 4.0)) <= 0.5 * r @ W @ r


def test_zero_penalty_limit(rng):
    W = random_spd(rng, 6)
    r = rng.standard_normal(6)
    for o in (solve_outlier_admm(r, W, 1e-12, BIG), solve_outlier_fmhsdm(r, W, 1e-12, BIG),
              solve_outlier_cd(r, W, OutlierPenalty("l1", 1e-12), BIG),
              solve_outlier_gist(r, W, OutlierPenalty("mcp", 1e-12, 4.0), BIG)):
        assert np.linalg.norm(o - r) <= 1e-6 * np.linalg.norm(r)


@given(st.integers(0, 10_000))
def test_l1_solvers_match_reference(seed):
    rng = np.random.default_rng(seed)
    W = random_spd(rng, 5, 20.0)
    r = rng.standard_normal(5) * 3
    lam = rng.uniform(0.1, 2.0)
    ref = l1_reference(r, W, lam)
    pen = OutlierPenalty("l1", lam)
    f_ref = outlier_objective(ref, r, W, pen)
    for o in (solve_outlier_admm(r, W, lam, SolverBudget(3000)),
              solve_outlier_fmhsdm(r, W, lam, SolverBudget(3000)),
              solve_outlier_cd(r, W, pen, SolverBudget(3000))):
        assert outlier_objective(o, r, W, pen) <= f_ref + 1e-8


@given(st.integers(0, 10_000), st.integers(1, 30))
def test_gist_and_cd_mcp_never_worse_than_origin(seed, iters):
    rng = np.random.default_rng(seed)
    W = random_spd(rng, 6, 30.0)
    r = rng.standard_normal(6) * 5
    pen = OutlierPenalty("mcp", rng.uniform(0.1, 3.0), 4.0)
    f0 = 0.5 * r @ W @ r
    assert outlier_objective(solve_outlier_gist(r, W, pen, SolverBudget(iters)), r, W, pen) <= f0
    if np.all(np.diag(W) * pen.theta > 1):
        assert outlier_objective(solve_outlier_cd(r, W, pen, SolverBudget(iters)),
                                 r, W, pen) <= f0


@given(st.integers(0, 10_000))
def test_monotone_objective_over_budget(seed):
    rng = np.random.default_rng(seed)
    W = random_spd(rng, 6, 30.0)
    r = rng.standard_normal(6) * 5
    for pen, solve in ((OutlierPenalty("mcp", 1.0, 4.0), solve_outlier_gist),
                       (OutlierPenalty("mcp", 1.0, 4.0), solve_outlier_cd),
                       (OutlierPenalty("l1", 1.0), solve_outlier_cd)):
        objs = [outlier_objective(solve(r, W, pen, SolverBudget(k)), r, W, pen)
                for k in range(1, 15)]
        assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))


def test_gist_diagonal_matches_firm_threshold(rng):
    d = rng.uniform(0.5, 3.0, 6)
    r = rng.standard_normal(6) * 4
    o = solve_outlier_gist(r, np.diag(d), MCP, SolverBudget(500))
    expect = np.array([mcp_threshold(t, 1.0, 4.0, c) for t, c in zip(r, d)])
    pen_obj = outlier_objective(o, r, np.diag(d), MCP)
    assert pen_obj <= outlier_objective(expect, r, np.diag(d), MCP) + 1e-9


def test_cd_mcp_condition():
    with pytest.raises(ValueError, match="theta"):
        solve_outlier_cd(np.ones(2), 0.1 * np.eye(2), MCP)
    with pytest.raises(ValueError, match="theta"):
        OutlierSolver(0.1 * np.eye(2), MCP, "cd")
    with pytest.raises(ValueError, match="diagonal"):
        solve_outlier_cd(np.ones(2), np.diag([1.0, 0.0]), L1)


def test_solver_penalty_compatibility():
    with pytest.raises(ValueError):
        OutlierSolver(np.eye(2), MCP, "admm")
    with pytest.raises(ValueError):
        OutlierSolver(np.eye(2), L1, "gist")
    with pytest.raises(ValueError):
        solve_outlier_gist(np.ones(2), np.eye(2), L1)


def test_solver_object_matches_functions(rng):
    W = random_spd(rng, 5)
    r = rng.standard_normal(5) * 3
    np.testing.assert_array_equal(OutlierSolver(W, L1, "admm")(r), solve_outlier_admm(r, W, 1.0))
    np.testing.assert_array_equal(OutlierSolver(W, MCP, "gist")(r),
                                  solve_outlier_gist(r, W, MCP))


def test_early_exit_tolerance(rng):
    W = random_spd(rng, 5)
    r = rng.standard_normal(5) * 3
    loose = solve_outlier_fmhsdm(r, W, 1.0, SolverBudget(10_000, tol=1e-3))
    tight = solve_outlier_fmhsdm(r, W, 1.0, SolverBudget(10_000))
    assert np.linalg.norm(loose - tight) < 1e-1
