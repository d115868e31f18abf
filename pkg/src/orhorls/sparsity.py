"""Sparse outlier estimation.

The per-sample subproblem solved by every robust filter is

    min_o  0.5 * (o - r)^T W (o - r) + lam * rho(o)

with ``r = y_n - F_n x_n`` the current residual, ``W`` the inverse noise
correlation and ``rho`` either the l1 norm or the minimax concave penalty
(MCP).  Four solvers are provided: ADMM and relaxed forward-backward
splitting (FMHSDM) for l1, GIST for MCP, and cyclic coordinate descent for
both.  The iteration kernels are compiled with numba; the Python wrappers do
argument checking.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

__all__ = [
    "OutlierPenalty",
    "SolverBudget",
    "penalty_value",
    "outlier_objective",
    "soft_threshold",
    "mcp_threshold",
    "prox_l1_mat",
    "solve_outlier_admm",
    "solve_outlier_fmhsdm",
    "solve_outlier_gist",
    "solve_outlier_cd",
    "OutlierSolver",
    "INNER_SOLVERS",
]

INNER_SOLVERS = ("admm", "fmhsdm", "gist", "cd")


@dataclass(frozen=True)
class OutlierPenalty:
    """Sparsity penalty ``lam * rho(o)``.

    ``kind`` is ``"l1"`` or ``"mcp"``.  For MCP,
    ``mcp(t) = lam|t| - t^2 / (2 theta)`` when ``|t| <= theta lam`` and
    ``theta lam^2 / 2`` beyond.
    """

    kind: str = "l1"
    lam: float = 1.0
    theta: float = 4.0

    def __post_init__(self):
        if self.kind not in ("l1", "mcp"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if not self.lam > 0:
            raise ValueError(f"penalty weight must be positive, got {self.lam}")
        if self.kind == "mcp" and not self.theta > 0:
            raise ValueError(f"MCP theta must be positive, got {self.theta}")


@dataclass(frozen=True)
class SolverBudget:
    """Iteration cap and optional early-exit tolerance on the iterate change.

    ``tol = None`` (the default) runs exactly ``max_iters`` iterations, so
    every solver spends the same fixed budget per sample.
    """

    max_iters: int = 100
    tol: Optional[float] = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol is not None and self.tol < 0:
            raise ValueError("tol must be nonnegative")

    @property
    def kernel_tol(self) -> float:
        # negative disables the early exit inside the kernels
        return -1.0 if self.tol is None else float(self.tol)


def penalty_value(p: OutlierPenalty, o) -> float:
    a = np.abs(np.asarray(o, dtype=float))
    if p.kind == "l1":
        return p.lam * float(a.sum())
    cap = p.theta * p.lam
    inner = p.lam * a - a * a / (2.0 * p.theta)
    return float(np.where(a <= cap, inner, 0.5 * p.theta * p.lam**2).sum())


def outlier_objective(o, r, W, p: OutlierPenalty) -> float:
    d = np.asarray(o, float) - np.asarray(r, float)
    return 0.5 * float(d @ W @ d) + penalty_value(p, o)


def soft_threshold(t, tau):
    """``sign(t) * max(|t| - tau, 0)``, elementwise."""
    if np.any(np.asarray(tau) < 0):
        raise ValueError("threshold must be nonnegative")
    t = np.asarray(t, dtype=float)
    out = np.sign(t) * np.maximum(np.abs(t) - tau, 0.0)
    return out if out.ndim else float(out)


def mcp_threshold(t, lam, theta, c=1.0):
    """Firm thresholding: global minimiser of ``0.5 c (x - t)^2 + mcp(x)``.

    Requires ``c * theta > 1`` so the scalar problem is strictly convex.
    """
    c = np.asarray(c, dtype=float)
    if np.any(c * theta <= 1.0):
        raise ValueError(f"MCP prox needs c * theta > 1 (c={c}, theta={theta})")
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    mid = np.sign(t) * (c * a - lam) / (c - 1.0 / theta)
    out = np.where(a <= lam / c, 0.0, np.where(a > theta * lam, t, mid))
    return out if out.ndim else float(out)


def prox_l1_mat(F, lambda_g):
    """Entrywise soft thresholding of a matrix; the identity when ``lambda_g == 0``."""
    if lambda_g == 0:
        return F
    return np.sign(F) * np.maximum(np.abs(F) - lambda_g, 0.0)


# ---------------------------------------------------------------------------
# compiled kernels

@njit(cache=True)
def _soft(t, tau):
    if t > tau:
        return t - tau
    if t < -tau:
        return t + tau
    return 0.0


@njit(cache=True)
def _firm(t, lam, theta, c):
    a = abs(t)
    if a <= lam / c:
        return 0.0
    if a > theta * lam:
        return t
    v = (c * a - lam) / (c - 1.0 / theta)
    return v if t > 0 else -v


@njit(cache=True)
def _objective(o, r, W, lam, theta, mcp):
    n = o.shape[0]
    q = 0.0
    for i in range(n):
        di = o[i] - r[i]
        s = 0.0
        for j in range(n):
            s += W[i, j] * (o[j] - r[j])
        q += di * s
    pen = 0.0
    for i in range(n):
        a = abs(o[i])
        if mcp:
            if a <= theta * lam:
                pen += lam * a - a * a / (2.0 * theta)
            else:
                pen += 0.5 * theta * lam * lam
        else:
            pen += lam * a
    return 0.5 * q + pen


@njit(cache=True)
def _matvec(A, v, out):
    n = v.shape[0]
    for i in range(A.shape[0]):
        s = 0.0
        for j in range(n):
            s += A[i, j] * v[j]
        out[i] = s


@njit(cache=True)
def _admm(r, W, M, lam, rho, max_iters, tol):
    n = r.shape[0]
    Wr = np.empty(n)
    _matvec(W, r, Wr)
    b0 = np.empty(n)
    _matvec(M, Wr, b0)
    z = np.zeros(n)
    u = np.zeros(n)
    d = np.zeros(n)
    o = np.empty(n)
    tau = lam / rho
    tol2 = tol * tol
    for _ in range(max_iters):
        for i in range(n):
            d[i] = z[i] - u[i]
        pri = 0.0
        dual = 0.0
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += M[i, j] * d[j]
            o[i] = b0[i] + rho * s
        for i in range(n):
            zi = _soft(o[i] + u[i], tau)
            dual += (zi - z[i]) ** 2
            z[i] = zi
            res = o[i] - zi
            u[i] += res
            pri += res * res
        if tol >= 0.0 and pri <= tol2 and rho * rho * dual <= tol2:
            break
    return z


@njit(cache=True)
def _forward_backward(r, W, c, lam, beta, max_iters, tol):
    n = r.shape[0]
    o = np.zeros(n)
    g = np.empty(n)
    tau = lam / c
    tol2 = tol * tol
    for _ in range(max_iters):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += W[i, j] * (o[j] - r[j])
            g[i] = s
        change = 0.0
        for i in range(n):
            v = (1.0 - beta) * o[i] + beta * _soft(o[i] - g[i] / c, tau)
            change += (v - o[i]) ** 2
            o[i] = v
        if tol >= 0.0 and change <= tol2:
            break
    return o


@njit(cache=True)
def _gist(r, W, W_norm, lam, theta, max_iters, tol, max_backtracks):
    n = r.shape[0]
    o = np.zeros(n)
    obj = _objective(o, r, W, lam, theta, True)
    c_lo = max(1e-2 * W_norm, (1.0 + 1e-9) / theta)
    c_hi = max(1e2 * W_norm, c_lo)
    c = min(max(W_norm, c_lo), c_hi)
    o_prev = np.zeros(n)
    cand = np.zeros(n)
    g = np.empty(n)
    s = np.empty(n)
    Ws = np.empty(n)
    tol2 = tol * tol
    for k in range(max_iters):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += W[i, j] * (o[j] - r[j])
            g[i] = acc
        if k > 0:
            ss = 0.0
            for i in range(n):
                s[i] = o[i] - o_prev[i]
                ss += s[i] * s[i]
            if ss > 0.0:
                _matvec(W, s, Ws)
                c = min(max((s @ Ws) / ss, c_lo), c_hi)
        accepted = False
        cand_obj = obj
        for _ in range(max_backtracks + 1):
            for i in range(n):
                cand[i] = _firm(o[i] - g[i] / c, lam, theta, c)
            cand_obj = _objective(cand, r, W, lam, theta, True)
            if cand_obj <= obj:
                accepted = True
                break
            c *= 2.0
        if not accepted:
            break
        change = 0.0
        for i in range(n):
            change += (cand[i] - o[i]) ** 2
            o_prev[i] = o[i]
            o[i] = cand[i]
        obj = cand_obj
        if tol >= 0.0 and change <= tol2:
            break
    return o


@njit(cache=True)
def _coordinate_descent(r, W, lam, theta, mcp, max_iters, tol):
    n = r.shape[0]
    Wr = np.empty(n)
    _matvec(W, r, Wr)
    o = np.zeros(n)
    for _ in range(max_iters):
        change = 0.0
        for i in range(n):
            s = Wr[i]
            for j in range(n):
                if j != i:
                    s -= W[i, j] * o[j]
            w = W[i, i]
            z = s / w
            if mcp:
                v = _firm(z, lam, theta, w)
            else:
                v = _soft(z, lam / w)
            change = max(change, abs(v - o[i]))
            o[i] = v
        if tol >= 0.0 and change <= tol:
            break
    return o


# ---------------------------------------------------------------------------
# public solvers

def _prep(r, W):
    r = np.ascontiguousarray(r, dtype=float)
    W = np.ascontiguousarray(W, dtype=float)
    if r.ndim != 1 or W.shape != (r.size, r.size):
        raise ValueError(f"shape mismatch: r {r.shape}, W {W.shape}")
    return r, W


def admm_matrix(W, rho_admm=1.0):
    """``(W + rho I)^{-1}``, computed once per noise model and reused by ADMM."""
    W = np.asarray(W, dtype=float)
    c = np.linalg.cholesky(W + rho_admm * np.eye(W.shape[0]))
    ci = np.linalg.inv(c)
    return np.ascontiguousarray(ci.T @ ci)


def solve_outlier_admm(r, W, lam, budget=SolverBudget(), rho_admm=1.0, M=None):
    """ADMM on the split ``o = z`` for the l1-penalised subproblem.

    Parameters
    ----------
    r : ndarray, shape (L,)
        Residual ``y - F x``.
    W : ndarray, shape (L, L)
        Inverse noise correlation.
    lam : float
        l1 weight.
    budget : SolverBudget
    rho_admm : float
        Augmented-Lagrangian parameter (fixed).
    M : ndarray, optional
        Cached ``(W + rho_admm I)^{-1}``; computed on the fly when omitted.

    Returns
    -------
    ndarray
        The thresholded split variable ``z`` (exactly sparse).
    """
    r, W = _prep(r, W)
    if not lam > 0 or not rho_admm > 0:
        raise ValueError("lam and rho_admm must be positive")
    if M is None:
        M = admm_matrix(W, rho_admm)
    return _admm(r, W, M, float(lam), float(rho_admm), int(budget.max_iters), budget.kernel_tol)


def solve_outlier_fmhsdm(r, W, lam, budget=SolverBudget(), beta=1.0, W_norm=None, eps=1e-12):
    """Relaxed forward-backward iterations with step ``1 / (||W|| + eps)``."""
    r, W = _prep(r, W)
    if not lam > 0:
        raise ValueError("lam must be positive")
    if not 0 < beta <= 1:
        raise ValueError("relaxation beta must lie in (0, 1]")
    if W_norm is None:
        W_norm = np.linalg.eigvalsh(W)[-1]
    c = float(W_norm) + eps
    return _forward_backward(r, W, c, float(lam), float(beta), int(budget.max_iters),
                             budget.kernel_tol)


def solve_outlier_gist(r, W, p: OutlierPenalty, budget=SolverBudget(), W_norm=None,
                       max_backtracks=20):
    """GIST proximal gradient for the MCP-penalised subproblem.

    Barzilai-Borwein step initialisation, monotone backtracking.  Starts at
    ``o = 0``; the returned objective never exceeds ``0.5 r^T W r``.
    """
    if p.kind != "mcp":
        raise ValueError("GIST is used with the MCP penalty")
    r, W = _prep(r, W)
    if W_norm is None:
        W_norm = np.linalg.eigvalsh(W)[-1]
    return _gist(r, W, float(W_norm), float(p.lam), float(p.theta), int(budget.max_iters),
                 budget.kernel_tol, int(max_backtracks))


def solve_outlier_cd(r, W, p: OutlierPenalty, budget=SolverBudget()):
    """Cyclic exact coordinate minimisation (l1 or MCP)."""
    r, W = _prep(r, W)
    d = np.diag(W)
    if np.any(d <= 0):
        raise ValueError("diagonal of W must be strictly positive")
    mcp = p.kind == "mcp"
    if mcp and np.any(d * p.theta <= 1.0):
        raise ValueError(f"MCP coordinate step needs W_ii * theta > 1 (theta={p.theta}, "
                         f"min W_ii={d.min():.4g})")
    return _coordinate_descent(r, W, float(p.lam), float(p.theta), mcp, int(budget.max_iters),
                               budget.kernel_tol)


class OutlierSolver:
    """Per-noise-model solver with precomputed factors.

    Calling the instance with a residual returns the outlier estimate.
    """

    def __init__(self, W, penalty: OutlierPenalty, inner="admm", budget=SolverBudget(),
                 rho_admm=1.0, beta=1.0, W_norm=None):
        if inner not in INNER_SOLVERS:
            raise ValueError(f"unknown inner solver {inner!r}")
        if inner in ("admm", "fmhsdm") and penalty.kind != "l1":
            raise ValueError(f"{inner} solves the l1-penalised problem only")
        if inner == "gist" and penalty.kind != "mcp":
            raise ValueError("gist is used with the MCP penalty")
        self.W = np.ascontiguousarray(W, dtype=float)
        self.penalty = penalty
        self.inner = inner
        self.budget = budget
        self.rho_admm = float(rho_admm)
        self.beta = float(beta)
        self.W_norm = float(np.linalg.eigvalsh(self.W)[-1] if W_norm is None else W_norm)
        d = np.diag(self.W)
        if inner == "cd" and penalty.kind == "mcp" and np.any(d * penalty.theta <= 1.0):
            raise ValueError(f"MCP coordinate step needs W_ii * theta > 1 "
                             f"(theta={penalty.theta}, min W_ii={d.min():.4g})")
        self._M = admm_matrix(self.W, self.rho_admm) if inner == "admm" else None
        self._args = (float(penalty.lam), int(budget.max_iters), budget.kernel_tol)

    def __call__(self, r):
        r = np.ascontiguousarray(r, dtype=float)
        lam, it, tol = self._args
        if self.inner == "admm":
            return _admm(r, self.W, self._M, lam, self.rho_admm, it, tol)
        if self.inner == "fmhsdm":
            return _forward_backward(r, self.W, self.W_norm + 1e-12, lam, self.beta, it, tol)
        if self.inner == "gist":
            return _gist(r, self.W, self.W_norm, lam, self.penalty.theta, it, tol, 20)
        return _coordinate_descent(r, self.W, lam, self.penalty.theta,
                                   self.penalty.kind == "mcp", it, tol)

    def objective(self, o, r):
        return outlier_objective(o, r, self.W, self.penalty)
