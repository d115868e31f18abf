"""Online estimators for ``y_n = F x_n + o_n + v_n``.

* :class:`RlsFilter` - exponentially weighted RLS, no outlier model.
* :class:`OrRlsFilter` - sparse outlier estimate per sample, then an RLS
  update on the cleaned output.
* :class:`OrHoRlsFilter` - sparse outlier estimate per sample, then a
  hierarchical-optimisation update of ``F`` built from steepest-descent
  directions of the running weighted LS loss, a power-method step-size
  bound and a proximal step for the side-information loss ``g``.

All three are initialised by :func:`warm_start` on the first ``n0`` samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit
from scipy.linalg import cho_factor, cho_solve

from .linalg import (NoiseModel, PowerState, RunningCorrelations, power_method,
                     power_step)
from .sparsity import INNER_SOLVERS, OutlierPenalty, OutlierSolver, SolverBudget, prox_l1_mat

__all__ = [
    "HoRlsConfig",
    "FilterEstimate",
    "RlsState",
    "gradient_ln",
    "warm_start",
    "horls_init",
    "horls_step",
    "rls_step",
    "or_rls_step",
    "RlsFilter",
    "OrRlsFilter",
    "OrHoRlsFilter",
]

G_KINDS = ("zero", "l1")


@dataclass(frozen=True)
class HoRlsConfig:
    """User parameters of OR-HO-RLS.

    ``penalty.lam`` weights the outlier penalty; ``lambda_g`` weights the
    side-information loss ``g`` in the proximal step.
    """

    alpha: float = 0.5
    lambda_g: float = 0.0
    eps_varpi: float = 5e-2
    n0: int = 500
    g_kind: str = "zero"
    penalty: OutlierPenalty = field(default_factory=OutlierPenalty)
    inner: str = "admm"
    budget: SolverBudget = field(default_factory=SolverBudget)
    gamma: float = 1.0
    rho_admm: float = 1.0
    beta: float = 1.0
    freeze_outliers_after: Optional[int] = None

    def __post_init__(self):
        # the experiments run at alpha = 0.5, so the lower end is closed
        if not 0.5 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0.5, 1], got {self.alpha}")
        if self.lambda_g < 0:
            raise ValueError("lambda_g must be nonnegative")
        if not self.eps_varpi > 0:
            raise ValueError("eps_varpi must be positive")
        if self.n0 < 1:
            raise ValueError("n0 must be positive")
        if self.g_kind not in G_KINDS:
            raise ValueError(f"g_kind must be one of {G_KINDS}")
        if self.inner not in INNER_SOLVERS:
            raise ValueError(f"inner solver must be one of {INNER_SOLVERS}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")

    @property
    def lam(self) -> float:
        return self.penalty.lam

    def make_solver(self, noise: NoiseModel) -> OutlierSolver:
        return OutlierSolver(noise.W, self.penalty, self.inner, self.budget,
                             rho_admm=self.rho_admm, beta=self.beta, W_norm=noise.W_norm)


@dataclass
class FilterEstimate:
    """Iterates carried between OR-HO-RLS recursions.

    ``F`` is the estimate used at the next sample, ``F_half_prev`` and
    ``F_prev`` the half-step and full-step iterates one recursion earlier,
    ``grad_prev`` the weighted gradient evaluated at ``F_prev`` with the
    correlations of that time, and ``varpi_prev`` its step-size bound.
    """

    F: np.ndarray
    F_half_prev: np.ndarray
    F_prev: np.ndarray
    grad_prev: np.ndarray
    varpi_prev: float
    n: int = 0


@dataclass
class RlsState:
    F: np.ndarray
    Pmat: np.ndarray
    gamma: float = 1.0


def gradient_ln(F, corrs: RunningCorrelations, noise: NoiseModel):
    """``W (F R_xx - R_yx + R_ox)``, the gradient of the running weighted LS loss."""
    return noise.W @ (F @ corrs.Rxx - corrs.Ryx + corrs.Rox)


def _prox_g(F, g_kind, lambda_g):
    if g_kind == "l1":
        return prox_l1_mat(F, lambda_g)
    return F


def warm_start(X, Y, noise: NoiseModel, solver: Optional[OutlierSolver] = None,
               max_outer=200, rtol=1e-8, return_history=False):
    """Batch fit of ``F`` and per-sample outliers on the first samples.

    Minimises ``sum_nu 0.5 ||y_nu - F x_nu - o_nu||_W^2 + lam rho(o_nu)``
    (plus a tiny ridge on ``F``) by alternating an exact ``F`` step with a
    per-sample outlier step.  With ``solver=None`` the outliers stay zero
    and the result is the ridge LS fit.

    Returns
    -------
    F : ndarray, shape (L, P)
    O : ndarray, shape (n0, L)
    history : list of float, optional
        Joint objective after each outer iteration.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n0, P = X.shape
    if n0 < P:
        raise ValueError(f"insufficient warm-start data: {n0} samples for P = {P}")
    G = X.T @ X
    delta = 1e-8 * np.trace(G) / P
    fac = cho_factor(G + delta * np.eye(P))
    W = noise.W

    def fit(O):
        return cho_solve(fac, X.T @ (Y - O)).T

    def sample_obj(R, O):
        D = R - O
        fit_term = 0.5 * np.einsum("ij,jk,ik->i", D, W, D)
        return fit_term + _penalty_rows(solver.penalty, O)

    O = np.zeros_like(Y)
    F = fit(O)
    history = []
    if solver is not None:
        ridge = lambda F: 0.5 * delta * float(np.sum((F @ F.T) * W))
        R = Y - X @ F.T
        obj = float(sample_obj(R, O).sum()) + ridge(F)
        history.append(obj)
        for _ in range(max_outer):
            O_new = np.array([solver(r) for r in R])
            keep = sample_obj(R, O_new) <= sample_obj(R, O)
            O = np.where(keep[:, None], O_new, O)
            F = fit(O)
            R = Y - X @ F.T
            new = float(sample_obj(R, O).sum()) + ridge(F)
            history.append(new)
            done = obj - new <= rtol * abs(obj)
            obj = new
            if done:
                break
    if return_history:
        return F, O, history
    return F, O


def _penalty_rows(p: OutlierPenalty, O):
    a = np.abs(O)
    if p.kind == "l1":
        return p.lam * a.sum(axis=1)
    cap = p.theta * p.lam
    return np.where(a <= cap, p.lam * a - a * a / (2 * p.theta),
                    0.5 * p.theta * p.lam**2).sum(axis=1)


def horls_init(F0, corrs: RunningCorrelations, noise: NoiseModel, cfg: HoRlsConfig):
    """First half-step and proximal step after the warm start.

    Uses the exact ``||R_xx||`` (converged power method) for the initial
    step-size bound.

    Returns
    -------
    est : FilterEstimate
    power : PowerState
        Seeded with the converged leading eigenvector of ``R_xx``.
    """
    F0 = np.ascontiguousarray(F0, dtype=float)
    norm_rxx, p = power_method(corrs.Rxx, tol=1e-10)
    varpi = noise.W_norm * norm_rxx + cfg.eps_varpi
    grad = gradient_ln(F0, corrs, noise)
    F_half = F0 - (cfg.alpha / varpi) * grad
    F1 = _prox_g(F_half, cfg.g_kind, cfg.lambda_g)
    est = FilterEstimate(F=F1, F_half_prev=F_half, F_prev=F0,
                         grad_prev=grad, varpi_prev=varpi, n=corrs.n)
    return est, PowerState(p, norm_rxx)


@njit(cache=True)
def _horls_update(F, F_half_prev, F_prev, grad_prev, varpi_prev, Rxx, Ryx, Rox, Gamma,
                  gamma, p, x, y, o, W, W_norm, alpha, eps_varpi, g_l1, lambda_g):
    P = x.shape[0]
    L = y.shape[0]
    old = gamma * Gamma
    new = old + 1.0
    a = old / new
    b = 1.0 / new
    for i in range(P):
        for j in range(P):
            Rxx[i, j] = a * Rxx[i, j] + b * x[i] * x[j]
    for i in range(L):
        for j in range(P):
            Ryx[i, j] = a * Ryx[i, j] + b * y[i] * x[j]
            Rox[i, j] = a * Rox[i, j] + b * o[i] * x[j]
    q = Rxx @ p
    nq = np.sqrt(q @ q)
    est = 0.0
    if nq >= 1e-14:
        p = q / nq
        est = max(p @ (Rxx @ p), 0.0)
    varpi = W_norm * est + eps_varpi
    grad = W @ (F @ Rxx - Ryx + Rox)
    F_half = F + F_half_prev - F_prev + (alpha / varpi_prev) * grad_prev - grad / varpi
    if g_l1 and lambda_g > 0.0:
        F_next = np.sign(F_half) * np.maximum(np.abs(F_half) - lambda_g, 0.0)
    else:
        F_next = F_half.copy()
    return F_next, F_half, grad, varpi, new, p, est


def horls_step(est: FilterEstimate, power: PowerState, corrs: RunningCorrelations, x, y,
               noise: NoiseModel, cfg: HoRlsConfig, solver: OutlierSolver):
    """One OR-HO-RLS recursion on sample ``(x, y)``.

    In order: outlier estimate on the a-priori residual, correlation
    update, one power iteration and the step-size bound, the half step
    reusing the cached gradient of the previous recursion, and the proximal
    step.  ``est`` and ``corrs`` are updated in place.

    Returns
    -------
    est, o_hat, power, corrs
    """
    n = est.n + 1
    if cfg.freeze_outliers_after is not None and n >= cfg.freeze_outliers_after:
        o_hat = np.zeros(y.shape[0])
    else:
        o_hat = solver(y - est.F @ x)
    F_next, F_half, grad, varpi, Gamma, p, rq = _horls_update(
        est.F, est.F_half_prev, est.F_prev, est.grad_prev, est.varpi_prev,
        corrs.Rxx, corrs.Ryx, corrs.Rox, corrs.Gamma, corrs.gamma, power.p, x, y, o_hat,
        noise.W, noise.W_norm, cfg.alpha, cfg.eps_varpi, cfg.g_kind == "l1", cfg.lambda_g)
    corrs.Gamma = Gamma
    corrs.n += 1
    est.F_prev = est.F
    est.F_half_prev = F_half
    est.grad_prev = grad
    est.varpi_prev = varpi
    est.F = F_next
    est.n = n
    if rq == 0.0:
        p = power.p
    return est, o_hat, PowerState(p, rq), corrs


def rls_init(F0, X0, gamma=1.0):
    """RLS state continuing a batch fit of the rows of ``X0``."""
    X0 = np.asarray(X0, dtype=float)
    n0, P = X0.shape
    w = gamma ** np.arange(n0 - 1, -1, -1, dtype=float)
    G = (X0 * w[:, None]).T @ X0
    G += 1e-8 * np.trace(G) / P * np.eye(P)
    c = np.linalg.cholesky(G)
    ci = np.linalg.inv(c)
    return RlsState(np.array(F0, dtype=float, order="C"), ci.T @ ci, gamma)


@njit(cache=True)
def _rls_update(F, Pmat, x, y, gamma):
    Px = Pmat @ x
    k = Px / (gamma + x @ Px)
    e = y - F @ x
    P = x.shape[0]
    for i in range(F.shape[0]):
        for j in range(P):
            F[i, j] += e[i] * k[j]
    for i in range(P):
        for j in range(i, P):
            v = (Pmat[i, j] - k[i] * Px[j]) / gamma
            Pmat[i, j] = v
            Pmat[j, i] = v


def rls_step(state: RlsState, x, y):
    """Exponentially weighted RLS update of ``F`` and the inverse correlation, in place.

    ``k = P x / (gamma + x^T P x)``, ``F += (y - F x) k^T``,
    ``P = (P - k x^T P) / gamma``.  Returns ``state``.
    """
    _rls_update(state.F, state.Pmat, np.asarray(x, float), np.asarray(y, float),
                float(state.gamma))
    return state


def or_rls_step(state: RlsState, x, y, solver: OutlierSolver):
    """Outlier estimate on the a-priori residual, then RLS on ``y - o_hat``."""
    o_hat = solver(y - state.F @ x)
    rls_step(state, x, y - o_hat)
    return state, o_hat


# ---------------------------------------------------------------------------
# stateful wrappers used by the benchmark

class RlsFilter:
    """Classical RLS, warm-started with the plain LS fit."""

    name = "RLS"

    def __init__(self, noise: NoiseModel, gamma=1.0):
        self.noise = noise
        self.gamma = gamma
        self.state = None

    def initialize(self, X0, Y0):
        F0, _ = warm_start(X0, Y0, self.noise)
        self.state = rls_init(F0, X0, self.gamma)
        return self

    def step(self, x, y):
        rls_step(self.state, x, y)
        return np.zeros_like(y)

    @property
    def F(self):
        return self.state.F


class OrRlsFilter(RlsFilter):
    """RLS on outlier-cleaned outputs."""

    def __init__(self, noise: NoiseModel, solver: OutlierSolver, gamma=1.0, warm_solver=None):
        super().__init__(noise, gamma)
        self.solver = solver
        self.warm_solver = solver if warm_solver is None else warm_solver

    def initialize(self, X0, Y0, warm=None):
        F0, _ = warm_start(X0, Y0, self.noise, self.warm_solver) if warm is None else warm
        self.state = rls_init(F0, X0, self.gamma)
        return self

    def step(self, x, y):
        return or_rls_step(self.state, x, y, self.solver)[1]


class OrHoRlsFilter:
    """OR-HO-RLS as a per-sample state machine."""

    def __init__(self, noise: NoiseModel, cfg: HoRlsConfig, warm_solver=None):
        self.noise = noise
        self.cfg = cfg
        self.solver = cfg.make_solver(noise)
        self.warm_solver = self.solver if warm_solver is None else warm_solver
        self.est = self.power = self.corrs = None

    def initialize(self, X0, Y0, warm=None):
        if warm is None:
            warm = warm_start(X0, Y0, self.noise, self.warm_solver)
        F0, O0 = warm
        self.corrs = RunningCorrelations.from_samples(X0, Y0, O0, self.cfg.gamma)
        self.est, self.power = horls_init(F0, self.corrs, self.noise, self.cfg)
        return self

    def step(self, x, y):
        _, o_hat, self.power, _ = horls_step(self.est, self.power, self.corrs, x, y,
                                             self.noise, self.cfg, self.solver)
        return o_hat

    @property
    def F(self):
        return self.est.F

    @property
    def varpi(self):
        return self.est.varpi_prev
