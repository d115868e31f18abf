import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from orhorls.linalg import (NoiseModel, PowerState, RunningCorrelations, corr_update,
                            power_method, power_step, solve_lyapunov, spectral_norm,
                            weighted_sq_norm)

from conftest import random_spd


def test_weighted_sq_norm_values():
    assert weighted_sq_norm([0.0, 0.0], np.eye(2)) == 0.0
    assert weighted_sq_norm([1.0, 2.0], np.eye(2)) == 5.0
    assert weighted_sq_norm([1.0, 1.0], [[2.0, 1.0], [1.0, 2.0]]) == 6.0


def test_weighted_sq_norm_shape_error():
    with pytest.raises(ValueError, match="shape"):
        weighted_sq_norm(np.ones(3), np.eye(2))


@given(st.integers(0, 10_000))
def test_weighted_sq_norm_nonnegative(seed):
    rng = np.random.default_rng(seed)
    W = random_spd(rng, 4, 1e3)
    assert weighted_sq_norm(rng.standard_normal(4), W) >= 0.0


def brute_corr(X, Y, O, gamma):
    n = X.shape[0]
    w = gamma ** (n - 1 - np.arange(n))
    G = w.sum()
    return (sum(wi * np.outer(x, x) for wi, x in zip(w, X)) / G,
            sum(wi * np.outer(y, x) for wi, x, y in zip(w, X, Y)) / G,
            sum(wi * np.outer(o, x) for wi, x, o in zip(w, X, O)) / G, G)


@pytest.mark.parametrize("gamma", [1.0, 0.9])
def test_recursive_correlations_match_direct_sums(rng, gamma):
    X, Y, O = rng.standard_normal((30, 4)), rng.standard_normal((30, 3)), rng.standard_normal((30, 3))
    state = RunningCorrelations.empty(4, 3, gamma)
    for x, y, o in zip(X, Y, O):
        state.update(x, y, o)
    Rxx, Ryx, Rox, G = brute_corr(X, Y, O, gamma)
    np.testing.assert_allclose(state.Rxx, Rxx, atol=1e-12)
    np.testing.assert_allclose(state.Ryx, Ryx, atol=1e-12)
    np.testing.assert_allclose(state.Rox, Rox, atol=1e-12)
    assert state.Gamma == pytest.approx(G)
    batch = RunningCorrelations.from_samples(X, Y, O, gamma)
    np.testing.assert_allclose(batch.Rxx, state.Rxx, atol=1e-12)
    np.testing.assert_allclose(batch.Ryx, state.Ryx, atol=1e-12)
    assert batch.Gamma == pytest.approx(state.Gamma)


def test_first_update_is_outer_product():
    x, y, o = np.array([1.0, 2.0]), np.array([3.0]), np.array([0.5])
    s = corr_update(RunningCorrelations.empty(2, 1), x, y, o)
    np.testing.assert_array_equal(s.Rxx, [[1, 2], [2, 4]])
    np.testing.assert_array_equal(s.Ryx, [[3, 6]])
    assert s.Gamma == 1.0


def test_two_identical_samples_keep_rxx():
    x = np.array([1.0, -1.0])
    s = RunningCorrelations.empty(2, 1, 1.0)
    s.update(x, np.zeros(1), np.zeros(1))
    first = s.Rxx.copy()
    s.update(x, np.zeros(1), np.zeros(1))
    np.testing.assert_allclose(s.Rxx, first)
    assert s.Gamma == 2.0


def test_corr_update_is_functional(rng):
    s = RunningCorrelations.empty(3, 2)
    t = corr_update(s, rng.standard_normal(3), rng.standard_normal(2), np.zeros(2))
    assert s.Gamma == 0 and t.Gamma == 1
    assert not np.any(s.Rxx)


def test_correlation_dimension_mismatch():
    with pytest.raises(ValueError):
        RunningCorrelations.empty(3, 2).update(np.ones(2), np.ones(2), np.ones(2))


def test_invalid_forgetting_factor():
    with pytest.raises(ValueError):
        RunningCorrelations.empty(2, 2, 0.0)


@given(st.integers(0, 10_000), st.floats(0.5, 1.0))
def test_rxx_stays_symmetric_psd(seed, gamma):
    rng = np.random.default_rng(seed)
    s = RunningCorrelations.empty(3, 2, gamma)
    for _ in range(10):
        s.update(rng.standard_normal(3), rng.standard_normal(2), np.zeros(2))
    np.testing.assert_allclose(s.Rxx, s.Rxx.T, atol=1e-14)
    assert np.linalg.eigvalsh(s.Rxx).min() > -1e-12


def test_power_method_examples():
    assert power_method(np.diag([3.0, 1.0]))[0] == pytest.approx(3.0, rel=1e-10)
    assert power_method(2 * np.eye(5))[0] == pytest.approx(2.0, rel=1e-12)
    assert power_method(np.zeros((3, 3)))[0] == 0.0


def test_power_method_errors():
    with pytest.raises(ValueError, match="square"):
        power_method(np.ones((2, 3)))
    with pytest.raises(ValueError, match="symmetric"):
        power_method(np.array([[1.0, 2.0], [0.0, 1.0]]))


@given(st.integers(0, 10_000))
def test_power_method_matches_eigvalsh(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 6))
    M = A @ A.T
    assert spectral_norm(M, 1e-13) == pytest.approx(np.linalg.eigvalsh(M)[-1], rel=1e-6)


def test_power_step_rayleigh_bound(rng):
    M = random_spd(rng, 5, 50.0)
    state = PowerState.start(5)
    top = np.linalg.eigvalsh(M)[-1]
    prev = 0.0
    for _ in range(50):
        state = power_step(state, M)
        assert state.estimate <= top * (1 + 1e-12)
        assert state.estimate >= prev - 1e-9 * top
        prev = state.estimate
    assert state.estimate == pytest.approx(top, rel=1e-6)


def test_power_step_zero_matrix_keeps_vector():
    s = PowerState.start(3)
    out = power_step(s, np.zeros((3, 3)))
    assert out.estimate == 0.0
    np.testing.assert_array_equal(out.p, s.p)


def test_lyapunov_scalar_and_zero():
    assert solve_lyapunov(np.array([[0.5]]), np.array([[1.0]]))[0, 0] == pytest.approx(4 / 3)
    Q = np.diag([1.0, 2.0])
    np.testing.assert_array_equal(solve_lyapunov(np.zeros((2, 2)), Q), Q)


def test_lyapunov_matches_scipy(rng):
    A = rng.standard_normal((6, 6))
    A *= 0.9 / np.linalg.norm(A, 2)
    Q = random_spd(rng, 6)
    S = solve_lyapunov(A, Q, tol=1e-14)
    np.testing.assert_allclose(S, scipy.linalg.solve_discrete_lyapunov(A, Q), rtol=1e-9,
                               atol=1e-10)


def test_lyapunov_unstable():
    with pytest.raises(ValueError, match="not stable"):
        solve_lyapunov(np.array([[1.0]]), np.array([[1.0]]))


def test_noise_model(rng):
    R = random_spd(rng, 4, 100.0)
    nm = NoiseModel.from_covariance(R)
    np.testing.assert_allclose(nm.W @ R, np.eye(4), atol=1e-10)
    assert nm.W_norm == pytest.approx(np.linalg.eigvalsh(nm.W)[-1], rel=1e-9)
    with pytest.raises(ValueError, match="positive definite"):
        NoiseModel.from_covariance(-np.eye(2))
