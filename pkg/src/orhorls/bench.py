"""Monte-Carlo comparison of the estimators on synthetic streams.

A trial draws one stream and runs every method on it after a warm start on
the first ``n0`` samples.  Per-step NRMSE and wall time are recorded from
``n0 + 1`` to the horizon; warm-start work is outside the timed region.
"""
from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .filters import HoRlsConfig, OrHoRlsFilter, OrRlsFilter, RlsFilter
from .sparsity import INNER_SOLVERS, OutlierPenalty, OutlierSolver, SolverBudget
from .synthdata import ScenarioConfig, Stream, generate_stream

__all__ = [
    "MethodSpec",
    "TrialTrace",
    "ExperimentResult",
    "nrmse",
    "noise_scale",
    "default_methods",
    "trial_rng",
    "run_trial",
    "run_on_stream",
    "run_experiment",
    "tune",
    "LAMBDA_GRID",
    "WORKERS_ENV",
]

FAMILIES = ("RLS", "OR-RLS", "OR-HO-RLS")
WORKERS_ENV = "ORHORLS_WORKERS"
# multiples of the noise scale, log-spaced over a factor of 16
LAMBDA_GRID = tuple(float(v) for v in 0.5 * 16.0 ** (np.arange(7) / 6.0))
_TUNE_OFFSET = 1_000_000


@dataclass(frozen=True)
class MethodSpec:
    """One estimator configuration.

    ``lam`` is the outlier-penalty weight in units of the per-trial noise
    scale ``sqrt(mean(diag(R_vv^{-1})))``, so one value transfers across
    trials whose random noise models differ.
    """

    name: str
    family: str
    penalty: str = "l1"
    inner: str = "admm"
    lam: float = 2.0
    theta: float = 4.0
    g_kind: str = "zero"
    lambda_g: float = 0.0
    rho_admm: float = 1.0
    beta: float = 1.0
    max_iters: int = 100
    tol: Optional[float] = None
    freeze_outliers_after: Optional[int] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family: must be one of {FAMILIES}, got {self.family!r}")
        if self.family == "RLS":
            return
        if self.penalty not in ("l1", "mcp"):
            raise ValueError(f"penalty: must be l1 or mcp, got {self.penalty!r}")
        if self.inner not in INNER_SOLVERS:
            raise ValueError(f"inner: must be one of {INNER_SOLVERS}, got {self.inner!r}")
        if self.family == "OR-HO-RLS" and self.inner == "cd":
            raise ValueError("inner: OR-HO-RLS runs with admm, fmhsdm or gist")
        if self.inner in ("admm", "fmhsdm") and self.penalty != "l1":
            raise ValueError(f"penalty: {self.inner} needs the l1 penalty")
        if self.inner == "gist" and self.penalty != "mcp":
            raise ValueError("penalty: gist needs the mcp penalty")
        if not self.lam > 0:
            raise ValueError("lam: must be positive")
        if self.g_kind not in ("zero", "l1"):
            raise ValueError("g_kind: must be zero or l1")
        if self.lambda_g < 0:
            raise ValueError("lambda_g: must be nonnegative")

    @property
    def cd(self) -> bool:
        return self.inner == "cd"

    def replace(self, **kw) -> "MethodSpec":
        return replace(self, **kw)

    def build(self, stream: Stream, cfg: ScenarioConfig):
        """Instantiate the filter for one stream."""
        noise = stream.noise
        if self.family == "RLS":
            return RlsFilter(noise, cfg.gamma)
        pen = OutlierPenalty(self.penalty, self.lam * noise_scale(noise.W), self.theta)
        budget = SolverBudget(self.max_iters, self.tol)
        if self.family == "OR-RLS":
            solver = OutlierSolver(noise.W, pen, self.inner, budget, rho_admm=self.rho_admm,
                                   beta=self.beta, W_norm=noise.W_norm)
            return OrRlsFilter(noise, solver, cfg.gamma)
        hcfg = HoRlsConfig(alpha=cfg.alpha, lambda_g=self.lambda_g, eps_varpi=cfg.eps_varpi,
                           n0=cfg.n0, g_kind=self.g_kind, penalty=pen, inner=self.inner,
                           budget=budget, gamma=cfg.gamma, rho_admm=self.rho_admm,
                           beta=self.beta, freeze_outliers_after=self.freeze_outliers_after)
        return OrHoRlsFilter(noise, hcfg)


@dataclass
class TrialTrace:
    """NRMSE and per-step wall time of one method on one trial.

    Entry ``k`` refers to time index ``n0 + 1 + k``.  A diverged run is
    truncated at the first non-finite estimate.
    """

    method: str
    trial: int
    nrmse: np.ndarray
    step_time_ns: np.ndarray
    n_start: int
    diverged_at: Optional[int] = None

    @property
    def n(self) -> np.ndarray:
        return self.n_start + np.arange(self.nrmse.size)


def nrmse(F, F_star) -> float:
    """``||F - F_star||_Fr / ||F_star||_Fr``."""
    d = np.linalg.norm(F_star)
    if d == 0:
        raise ValueError("NRMSE is undefined for a zero reference system")
    return float(np.linalg.norm(np.asarray(F) - F_star) / d)


def noise_scale(W) -> float:
    return float(np.sqrt(np.mean(np.diag(W))))


def default_methods(g_kind="zero", lambda_g=0.0, lams=None):
    """The eight-method roster; ``lams`` maps method names to penalty weights."""
    lams = lams or {}
    specs = [
        MethodSpec("RLS", "RLS"),
        MethodSpec("OR-RLS(ADMM)", "OR-RLS", "l1", "admm"),
        MethodSpec("OR-RLS(CD-L1)", "OR-RLS", "l1", "cd"),
        MethodSpec("OR-RLS(MCP)", "OR-RLS", "mcp", "gist"),
        MethodSpec("OR-RLS(CD-MCP)", "OR-RLS", "mcp", "cd"),
        MethodSpec("OR-HO-RLS(ADMM)", "OR-HO-RLS", "l1", "admm", g_kind=g_kind,
                   lambda_g=lambda_g),
        MethodSpec("OR-HO-RLS(GIST)", "OR-HO-RLS", "mcp", "gist", g_kind=g_kind,
                   lambda_g=lambda_g),
        MethodSpec("OR-HO-RLS(FMHSDM)", "OR-HO-RLS", "l1", "fmhsdm", g_kind=g_kind,
                   lambda_g=lambda_g),
    ]
    return [s.replace(lam=lams[s.name]) if s.name in lams else s for s in specs]


def trial_rng(seed, trial):
    """Independent stream for ``trial`` under master ``seed``."""
    return np.random.default_rng([int(seed), int(trial)])


_WARMED = False


def _warm_kernels():
    """Load every compiled kernel once so first-call latency stays out of the timings."""
    global _WARMED
    if _WARMED:
        return
    cfg = ScenarioConfig(P=3, L=2, n0=6, horizon=8, burn_in=0, trials=1)
    stream = generate_stream(cfg, np.random.default_rng(0))
    for m in default_methods():
        filt = m.replace(max_iters=2).build(stream, cfg)
        filt.initialize(stream.X[:6], stream.Y[:6])
        filt.step(stream.X[6], stream.Y[6])
    _WARMED = True


def run_on_stream(stream: Stream, cfg: ScenarioConfig, method: MethodSpec, trial=0,
                  warm=None) -> TrialTrace:
    _warm_kernels()
    n0, H = cfg.n0, stream.horizon
    filt = method.build(stream, cfg)
    if warm is not None and method.family != "RLS":
        filt.initialize(stream.X[:n0], stream.Y[:n0], warm=warm)
    else:
        filt.initialize(stream.X[:n0], stream.Y[:n0])
    X, Y = stream.X, stream.Y
    errs = np.empty(H - n0)
    times = np.empty(H - n0, dtype=np.int64)
    starts = [s for s, _ in stream.systems]
    refs = [F for _, F in stream.systems]
    norms = [np.linalg.norm(F) for F in refs]
    which = 0
    diverged = None
    clock = time.perf_counter_ns
    for k, i in enumerate(range(n0, H)):
        n = i + 1
        t0 = clock()
        filt.step(X[i], Y[i])
        times[k] = clock() - t0
        F = filt.F
        while which + 1 < len(starts) and n >= starts[which + 1]:
            which += 1
        e = np.linalg.norm(F - refs[which]) / norms[which]
        if not np.isfinite(e):
            diverged = n
            errs, times = errs[:k], times[:k]
            break
        errs[k] = e
    return TrialTrace(method.name, trial, errs, times, n0 + 1, diverged)


def run_trial(cfg: ScenarioConfig, method: MethodSpec, seed=None, trial=0) -> TrialTrace:
    """Generate one stream (``seed`` defaults to ``(cfg.seed, trial)``) and run ``method``."""
    rng = trial_rng(cfg.seed, trial) if seed is None else np.random.default_rng(seed)
    stream = generate_stream(cfg, rng)
    return run_on_stream(stream, cfg, method, trial)


def _trial_job(args):
    cfg, methods, trial, seed = args
    stream = generate_stream(cfg, trial_rng(seed, trial))
    return [run_on_stream(stream, cfg, m, trial) for m in methods]


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, workers)


def _map(jobs, workers):
    workers = _workers(workers)
    if workers == 1 or len(jobs) == 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_job, jobs))


@dataclass
class ExperimentResult:
    cfg: ScenarioConfig
    methods: list
    traces: dict = field(default_factory=dict)  # name -> [TrialTrace] in trial order

    @property
    def names(self):
        return [m.name for m in self.methods]

    @property
    def n(self) -> np.ndarray:
        return np.arange(self.cfg.n0 + 1, self.cfg.horizon + 1)

    def _stack(self, name):
        size = self.cfg.horizon - self.cfg.n0
        out = np.full((len(self.traces[name]), size), np.nan)
        for row, t in zip(out, self.traces[name]):
            row[:t.nrmse.size] = t.nrmse
        return out

    def mean_nrmse(self, name) -> np.ndarray:
        """Mean NRMSE across trials per time index (diverged trials drop out)."""
        return self._moments(name)[0]

    def std_nrmse(self, name) -> np.ndarray:
        return self._moments(name)[1]

    def _moments(self, name):
        A = self._stack(name)
        ok = np.isfinite(A)
        cnt = ok.sum(axis=0)
        mean = np.full(A.shape[1], np.nan)
        std = np.full(A.shape[1], np.nan)
        live = cnt > 0
        Z = np.where(ok, A, 0.0)
        mean[live] = Z[:, live].sum(axis=0) / cnt[live]
        D = np.where(ok, A - mean, 0.0)
        std[live] = np.sqrt((D[:, live] ** 2).sum(axis=0) / cnt[live])
        return mean, std

    def at(self, name, n) -> float:
        """Mean NRMSE at time index ``n``."""
        return float(self.mean_nrmse(name)[n - self.cfg.n0 - 1])

    def final_nrmse(self, name) -> float:
        return float(self.mean_nrmse(name)[-1])

    def step_times(self, name) -> np.ndarray:
        return np.concatenate([t.step_time_ns for t in self.traces[name]])

    def time_stats(self, name):
        t = self.step_times(name).astype(float)
        if t.size == 0:
            return float("nan"), float("nan")
        return float(t.mean()), float(t.std())

    def divergences(self):
        return [(name, t.trial, t.diverged_at) for name in self.names
                for t in self.traces[name] if t.diverged_at is not None]

    def write_csv(self, out_dir) -> dict:
        """Write ``traces.csv``, ``summary_nrmse.csv``, ``summary_time.csv``, ``flags.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {k: out / f"{k}.csv" for k in ("traces", "summary_nrmse", "summary_time",
                                               "flags")}
        g = "{:.17g}".format
        with open(paths["traces"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "trial", "n", "nrmse", "step_time_ns"])
            for name in self.names:
                for t in self.traces[name]:
                    for n, e, s in zip(t.n, t.nrmse, t.step_time_ns):
                        w.writerow([name, t.trial, int(n), g(e), int(s)])
        with open(paths["summary_nrmse"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "n", "mean_nrmse", "std_nrmse"])
            for name in self.names:
                for n, m, s in zip(self.n, self.mean_nrmse(name), self.std_nrmse(name)):
                    w.writerow([name, int(n), g(m), g(s)])
        with open(paths["summary_time"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "mean_step_time_ns", "std_step_time_ns"])
            for name in self.names:
                m, s = self.time_stats(name)
                w.writerow([name, g(m), g(s)])
        with open(paths["flags"], "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "trial", "diverged_at"])
            for row in self.divergences():
                w.writerow(row)
        return paths


def run_experiment(cfg: ScenarioConfig, methods, trials=None, seed=None,
                   workers=None) -> ExperimentResult:
    """Run ``trials`` seeded trials of every method.

    Trials are independent work items (parallel when ``workers`` > 1 or the
    ``ORHORLS_WORKERS`` environment variable says so); results do not depend
    on the degree of parallelism.
    """
    trials = cfg.trials if trials is None else trials
    if trials < 1:
        raise ValueError("trials must be >= 1")
    seed = cfg.seed if seed is None else seed
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError("method names must be unique")
    jobs = [(cfg, list(methods), t, seed) for t in range(trials)]
    res = ExperimentResult(cfg, list(methods), {n: [] for n in names})
    for per_trial in _map(jobs, workers):
        for tr in per_trial:
            res.traces[tr.method].append(tr)
    return res


def _tune_job(args):
    cfg, methods, grid, seed, k = args
    stream = generate_stream(cfg, trial_rng(seed, _TUNE_OFFSET + k))
    half = (cfg.horizon - cfg.n0) // 2
    scores = {}
    for m in methods:
        for lam in grid:
            tr = run_on_stream(stream, cfg, m.replace(lam=lam))
            s = float(np.mean(tr.nrmse[half:])) if tr.diverged_at is None else np.inf
            scores[(m.name, lam)] = s
    return scores


def tune(cfg: ScenarioConfig, methods, grid=LAMBDA_GRID, seeds=3, seed=None, workers=None):
    """Pick each method's ``lam`` from ``grid`` on held-out streams.

    The score is the NRMSE averaged over the second half of the run and over
    ``seeds`` streams that never coincide with experiment trials.

    Returns
    -------
    best : dict
        Method name -> selected ``lam`` (methods without a penalty are skipped).
    scores : dict
        ``(name, lam)`` -> mean score.
    """
    seed = cfg.seed if seed is None else seed
    tunable = [m for m in methods if m.family != "RLS"]
    jobs = [(cfg, tunable, list(grid), seed, k) for k in range(seeds)]
    workers = _workers(workers)
    if workers == 1:
        parts = [_tune_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_tune_job, jobs))
    scores = {k: float(np.mean([p[k] for p in parts])) for k in parts[0]}
    best = {}
    for m in tunable:
        best[m.name] = min(grid, key=lambda lam: (scores[(m.name, lam)], lam))
    return best, scores
