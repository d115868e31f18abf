"""Dense linear-algebra helpers shared by the filters.

Everything here works on small float64 numpy arrays (P, L of order 10-20).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "weighted_sq_norm",
    "RunningCorrelations",
    "corr_update",
    "NoiseModel",
    "PowerState",
    "power_step",
    "power_method",
    "spectral_norm",
    "solve_lyapunov",
]


def weighted_sq_norm(a, W):
    """Return the quadratic form ``a^T W a``.

    Parameters
    ----------
    a : array_like, shape (L,)
    W : array_like, shape (L, L)
        Symmetric positive-definite weight.
    """
    a = np.asarray(a, dtype=float)
    W = np.asarray(W, dtype=float)
    if a.ndim != 1 or W.shape != (a.size, a.size):
        raise ValueError(f"shape mismatch: a {a.shape}, W {W.shape}")
    return max(float(a @ W @ a), 0.0)


@dataclass
class RunningCorrelations:
    """Exponentially weighted sample correlations.

    ``R_ab = (1/Gamma) * sum_nu gamma^(n-nu) a_nu b_nu^T`` for the pairs
    (x, x), (y, x) and (o_hat, x), maintained recursively.
    """

    gamma: float
    Rxx: np.ndarray
    Ryx: np.ndarray
    Rox: np.ndarray
    Gamma: float = 0.0
    n: int = 0

    @classmethod
    def empty(cls, P: int, L: int, gamma: float = 1.0) -> "RunningCorrelations":
        if not 0.0 < gamma <= 1.0:
            raise ValueError(f"forgetting factor must lie in (0, 1], got {gamma}")
        return cls(gamma, np.zeros((P, P)), np.zeros((L, P)), np.zeros((L, P)))

    @classmethod
    def from_samples(cls, X, Y, O, gamma: float = 1.0) -> "RunningCorrelations":
        """Build the state after absorbing the rows of ``X``, ``Y``, ``O`` in order."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        O = np.atleast_2d(np.asarray(O, dtype=float))
        n = X.shape[0]
        state = cls.empty(X.shape[1], Y.shape[1], gamma)
        if n == 0:
            return state
        w = gamma ** np.arange(n - 1, -1, -1, dtype=float)
        Gamma = float(w.sum())
        Xw = X * (w / Gamma)[:, None]
        state.Rxx = Xw.T @ X
        state.Rxx = 0.5 * (state.Rxx + state.Rxx.T)
        state.Ryx = Y.T @ Xw
        state.Rox = O.T @ Xw
        state.Gamma = Gamma
        state.n = n
        return state

    @property
    def P(self) -> int:
        return self.Rxx.shape[0]

    @property
    def L(self) -> int:
        return self.Ryx.shape[0]

    def copy(self) -> "RunningCorrelations":
        return RunningCorrelations(self.gamma, self.Rxx.copy(), self.Ryx.copy(),
                                   self.Rox.copy(), self.Gamma, self.n)

    def update(self, x, y, o_hat) -> "RunningCorrelations":
        """Absorb one sample in place and return ``self``."""
        if x.shape != (self.P,) or y.shape != (self.L,) or o_hat.shape != (self.L,):
            raise ValueError("sample dimensions do not match the correlation state")
        old = self.gamma * self.Gamma
        new = old + 1.0
        a, b = old / new, 1.0 / new
        xs = x * b
        self.Rxx *= a
        self.Rxx += np.outer(x, xs)
        self.Ryx *= a
        self.Ryx += np.outer(y, xs)
        self.Rox *= a
        self.Rox += np.outer(o_hat, xs)
        self.Gamma = new
        self.n += 1
        return self


def corr_update(state: RunningCorrelations, x, y, o_hat) -> RunningCorrelations:
    """Functional form of :meth:`RunningCorrelations.update`; ``state`` is left untouched."""
    return state.copy().update(np.asarray(x, float), np.asarray(y, float),
                               np.asarray(o_hat, float))


@dataclass(frozen=True)
class NoiseModel:
    """Nominal-noise correlation ``R_vv`` with its inverse and the norm of the inverse."""

    R_vv: np.ndarray
    W: np.ndarray
    W_norm: float

    @classmethod
    def from_covariance(cls, R_vv) -> "NoiseModel":
        R_vv = np.asarray(R_vv, dtype=float)
        R_vv = 0.5 * (R_vv + R_vv.T)
        try:
            c = np.linalg.cholesky(R_vv)
        except np.linalg.LinAlgError as exc:
            raise ValueError("noise correlation matrix must be positive definite") from exc
        ci = np.linalg.inv(c)
        W = ci.T @ ci
        W = 0.5 * (W + W.T)
        return cls(R_vv, W, spectral_norm(W, tol=1e-12))

    @property
    def L(self) -> int:
        return self.R_vv.shape[0]


@dataclass
class PowerState:
    """Running power-method iterate for the leading eigenpair of ``R_xx``."""

    p: np.ndarray
    estimate: float = 0.0

    @classmethod
    def start(cls, P: int) -> "PowerState":
        return cls(_start_vector(P))


def power_step(state: PowerState, R_xx) -> PowerState:
    """One power iteration ``p <- R p / ||R p||`` followed by the Rayleigh quotient."""
    q = R_xx @ state.p
    nq = np.linalg.norm(q)
    if nq < 1e-14:
        return PowerState(state.p, 0.0)
    p = q / nq
    return PowerState(p, max(float(p @ R_xx @ p), 0.0))


def _start_vector(n):
    # deterministic and not orthogonal to any coordinate axis
    v = 1.0 + np.arange(n, dtype=float) / (2.0 * n)
    return v / np.linalg.norm(v)


def power_method(M, tol=1e-10, max_iter=100_000, p0=None):
    """Leading eigenpair of a symmetric PSD matrix by power iteration.

    Stops when successive Rayleigh quotients agree to relative ``tol``.

    Returns
    -------
    value : float
    vector : ndarray
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    scale = np.abs(M).max() if M.size else 0.0
    if not np.allclose(M, M.T, rtol=0.0, atol=1e-10 * max(scale, 1.0)):
        raise ValueError("matrix must be symmetric")
    p = _start_vector(M.shape[0]) if p0 is None else np.asarray(p0, float) / np.linalg.norm(p0)
    if scale == 0.0:
        return 0.0, p
    est = float(p @ M @ p)
    for _ in range(max_iter):
        q = M @ p
        nq = np.linalg.norm(q)
        if nq == 0.0:
            return 0.0, p
        p = q / nq
        new = float(p @ M @ p)
        if abs(new - est) <= tol * abs(new):
            est = new
            break
        est = new
    return max(est, 0.0), p


def spectral_norm(M, tol=1e-10):
    """Largest eigenvalue of a symmetric PSD matrix (its spectral norm)."""
    return power_method(M, tol)[0]


def solve_lyapunov(A, Q, tol=1e-10, max_iter=10_000):
    """Solve ``S = A S A^T + Q`` by fixed-point iteration from ``S = Q``.

    Raises
    ------
    ValueError
        If ``A`` has spectral radius >= 1 ("AR model not stable").
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if A.shape != Q.shape or A.shape[0] != A.shape[1]:
        raise ValueError(f"shape mismatch: A {A.shape}, Q {Q.shape}")
    if np.max(np.abs(np.linalg.eigvals(A))) >= 1.0:
        raise ValueError("AR model not stable")
    S = Q.copy()
    for _ in range(max_iter):
        S_next = A @ S @ A.T + Q
        done = np.max(np.abs(S_next - S)) <= tol
        S = S_next
        if done:
            break
    return 0.5 * (S + S.T)
