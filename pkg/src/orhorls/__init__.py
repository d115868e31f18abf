"""Outlier-robust online identification of linear systems.

Estimators for ``y_n = F x_n + o_n + v_n`` with sparse outliers ``o_n`` and
colored nominal noise ``v_n``: classical RLS, outlier-robust RLS and the
outlier-robust hierarchical-optimisation RLS (OR-HO-RLS), plus a synthetic
benchmark harness.
"""
from .bench import (ExperimentResult, MethodSpec, TrialTrace, default_methods, nrmse,
                    run_experiment, run_trial, tune)
from .config import ExperimentFile, parse_config, preset, write_config
from .filters import (FilterEstimate, HoRlsConfig, OrHoRlsFilter, OrRlsFilter, RlsFilter,
                      RlsState, gradient_ln, horls_init, horls_step, or_rls_step, rls_step,
                      warm_start)
from .linalg import (NoiseModel, PowerState, RunningCorrelations, corr_update, power_method,
                     power_step, solve_lyapunov, spectral_norm, weighted_sq_norm)
from .sparsity import (OutlierPenalty, OutlierSolver, SolverBudget, mcp_threshold,
                       outlier_objective, soft_threshold, solve_outlier_admm, solve_outlier_cd,
                       solve_outlier_fmhsdm, solve_outlier_gist)
from .synthdata import Generator, ScenarioConfig, Stream, gen_sample, generate_stream

__version__ = "0.1.0"
