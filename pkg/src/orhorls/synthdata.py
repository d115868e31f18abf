"""Synthetic streams ``y_n = F x_n + o_n + v_n``.

Inputs are white Gaussian, the nominal noise ``v`` follows a stable AR(1)
recursion with random state matrix, and outliers are sparse with
Bernoulli support and uniform amplitudes.
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import Optional

import numpy as np

from .linalg import NoiseModel, solve_lyapunov

__all__ = [
    "ScenarioConfig",
    "Stream",
    "Generator",
    "make_system",
    "make_noise",
    "gen_sample",
    "generate_stream",
    "dump_stream",
]

SYSTEM_KINDS = ("dense", "sparse")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to generate data and drive the filters for one experiment."""

    P: int = 20
    L: int = 10
    snr_db: float = 20.0
    p_o: float = 0.2
    system_kind: str = "dense"
    sparse_fraction: float = 0.1
    change_at: Optional[int] = None
    horizon: int = 5000
    ar_smax: float = 0.95
    outlier_variance: float = 1e4
    burn_in: int = 1000
    gamma: float = 1.0
    n0: int = 500
    alpha: float = 0.5
    eps_varpi: float = 5e-2
    trials: int = 20
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.P < 1 or self.L < 1:
            errors.append(("P/L", "dimensions must be positive"))
        if not 0.0 <= self.p_o <= 1.0:
            errors.append(("p_o", f"must lie in [0, 1], got {self.p_o}"))
        if self.system_kind not in SYSTEM_KINDS:
            errors.append(("system_kind", f"must be one of {SYSTEM_KINDS}"))
        if not 0.0 < self.sparse_fraction <= 1.0:
            errors.append(("sparse_fraction", "must lie in (0, 1]"))
        if not 0.0 <= self.ar_smax < 1.0:
            errors.append(("ar_smax", f"must lie in [0, 1), got {self.ar_smax}"))
        if not self.outlier_variance > 0:
            errors.append(("outlier_variance", "must be positive"))
        if not 0.0 < self.gamma <= 1.0:
            errors.append(("gamma", f"must lie in (0, 1], got {self.gamma}"))
        if not 0.5 <= self.alpha <= 1.0:
            errors.append(("alpha", f"must lie in [0.5, 1], got {self.alpha}"))
        if not self.eps_varpi > 0:
            errors.append(("eps_varpi", "must be positive"))
        if self.n0 < self.P:
            errors.append(("n0", f"warm start needs n0 >= P ({self.P}), got {self.n0}"))
        if self.horizon <= self.n0:
            errors.append(("horizon", "must exceed n0"))
        if self.change_at is not None and not self.n0 < self.change_at <= self.horizon:
            errors.append(("change_at", "must lie in (n0, horizon]"))
        if self.trials < 1:
            errors.append(("trials", "must be >= 1"))
        if self.burn_in < 0:
            errors.append(("burn_in", "must be >= 0"))
        if errors:
            name, msg = errors[0]
            raise ValueError(f"{name}: {msg}")

    def replace(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class Stream:
    """A generated data stream; row ``n - 1`` holds time index ``n``."""

    X: np.ndarray
    Y: np.ndarray
    O: np.ndarray
    V: np.ndarray
    systems: list  # [(first time index, F_star)] in increasing order
    noise: NoiseModel
    ar_A: np.ndarray
    innovation_var: float

    def F_star(self, n: int) -> np.ndarray:
        F = self.systems[0][1]
        for start, G in self.systems:
            if n >= start:
                F = G
        return F

    @property
    def horizon(self) -> int:
        return self.X.shape[0]


def make_system(cfg: ScenarioConfig, rng) -> np.ndarray:
    """Dense standard-normal system, or a 0/1 system with ``round(fraction L P)`` ones."""
    L, P = cfg.L, cfg.P
    if cfg.system_kind == "dense":
        return rng.standard_normal((L, P))
    k = int(round(cfg.sparse_fraction * L * P))
    F = np.zeros(L * P)
    F[rng.choice(L * P, size=k, replace=False)] = 1.0
    return F.reshape(L, P)


def make_noise(cfg: ScenarioConfig, F_star, rng, ar_A=None):
    """AR(1) noise ``v_n = A v_{n-1} + w_n`` calibrated to the target SNR.

    ``A`` is a standard-normal matrix rescaled to spectral norm ``ar_smax``;
    ``w_n ~ N(0, q I)`` with ``q`` chosen so that
    ``trace(F R_xx F^T) / trace(R_vv) = 10^(snr_db / 10)`` for ``R_xx = I``.

    Returns
    -------
    noise : NoiseModel
    ar_A : ndarray
    q : float
        Innovation variance.
    """
    L = cfg.L
    if ar_A is None:
        G = rng.standard_normal((L, L))
        smax = np.linalg.norm(G, 2)
        ar_A = G * (cfg.ar_smax / smax) if cfg.ar_smax > 0 else np.zeros((L, L))
    unit = solve_lyapunov(ar_A, np.eye(L))
    signal = float(np.sum(F_star * F_star))
    q = signal / (10.0 ** (cfg.snr_db / 10.0) * np.trace(unit))
    return NoiseModel.from_covariance(q * unit), ar_A, q


class Generator:
    """Sample-by-sample generator holding the AR state and the current system."""

    def __init__(self, cfg: ScenarioConfig, rng=None):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self._system_rng = self.rng.spawn(1)[0]
        self.F_star = make_system(cfg, self.rng)
        self.noise, self.ar_A, self.q = make_noise(cfg, self.F_star, self.rng)
        self._chol_q = np.sqrt(self.q)
        self.amplitude = np.sqrt(3.0 * cfg.outlier_variance)
        self.v_prev = np.zeros(cfg.L)
        self.n = 0
        for _ in range(cfg.burn_in):
            self._next_noise()

    def _next_noise(self):
        w = self._chol_q * self.rng.standard_normal(self.cfg.L)
        self.v_prev = self.ar_A @ self.v_prev + w
        return self.v_prev

    def redraw_system(self):
        self.F_star = make_system(self.cfg, self._system_rng)

    def sample(self):
        """Advance to the next time index and return ``(x, y, o, v)``."""
        cfg = self.cfg
        self.n += 1
        if cfg.change_at is not None and self.n == cfg.change_at:
            self.redraw_system()
        x = self.rng.standard_normal(cfg.P)
        v = self._next_noise().copy()
        hit = self.rng.random(cfg.L) < cfg.p_o
        amp = self.rng.uniform(-self.amplitude, self.amplitude, cfg.L)
        o = np.where(hit, amp, 0.0)
        y = self.F_star @ x + o + v
        return x, y, o, v


def gen_sample(state: Generator, cfg: ScenarioConfig = None):
    """Draw the next ``(x, y, o_true, v_true)`` from a :class:`Generator`."""
    return state.sample()


def generate_stream(cfg: ScenarioConfig, rng=None) -> Stream:
    """Generate ``cfg.horizon`` samples in one go."""
    gen = Generator(cfg, rng)
    H, P, L = cfg.horizon, cfg.P, cfg.L
    X, Y, O, V = np.empty((H, P)), np.empty((H, L)), np.empty((H, L)), np.empty((H, L))
    systems = [(1, gen.F_star)]
    for i in range(H):
        X[i], Y[i], O[i], V[i] = gen.sample()
        if gen.F_star is not systems[-1][1]:
            systems.append((gen.n, gen.F_star))
    return Stream(X, Y, O, V, systems, gen.noise, gen.ar_A, gen.q)


def dump_stream(stream: Stream, path) -> None:
    """Write one whitespace-separated line per time index: x entries, y entries, o entries."""
    data = np.hstack([stream.X, stream.Y, stream.O])
    P, L = stream.X.shape[1], stream.Y.shape[1]
    header = " ".join([f"x{i}" for i in range(P)] + [f"y{i}" for i in range(L)]
                      + [f"o{i}" for i in range(L)])
    np.savetxt(path, data, fmt="%.17g", header=header, comments="# ", encoding="utf-8")
