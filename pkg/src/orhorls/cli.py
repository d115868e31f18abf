"""Command-line driver for the benchmark (subcommands run, plotdata, tune).

The number of worker processes for the trial pool is read from the
``ORHORLS_WORKERS`` environment variable (default 1).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .bench import LAMBDA_GRID, run_experiment, tune
from .config import PRESETS, ExperimentFile, parse_config, preset, write_config

__all__ = ["main", "build_parser", "cmd_run", "cmd_plotdata", "cmd_tune", "load_experiment"]


class CliError(Exception):
    pass


def _split(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def load_experiment(args) -> ExperimentFile:
    """Resolve ``--config`` / ``--preset`` and the command-line overrides."""
    if args.config and args.preset:
        raise CliError("--config and --preset are mutually exclusive")
    if args.config:
        exp = parse_config(args.config)
    else:
        name = args.preset or "fig1a"
        if name not in PRESETS:
            raise CliError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        cfg, methods = preset(name)
        exp = ExperimentFile(cfg, methods, cfg.trials, f"results/{name}", name)
    cfg = exp.scenario
    trials = exp.trials
    if args.trials is not None:
        trials = args.trials
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    methods = exp.methods
    if args.methods:
        by_name = {m.name: m for m in methods}
        wanted = _split(args.methods)
        missing = [m for m in wanted if m not in by_name]
        if missing:
            raise CliError(f"unknown method(s): {', '.join(missing)}")
        methods = [by_name[m] for m in wanted]
    out = args.output_dir or exp.output_dir
    return ExperimentFile(cfg.replace(trials=trials), methods, trials, out, exp.preset)


def cmd_run(args) -> int:
    exp = load_experiment(args)
    res = run_experiment(exp.scenario, exp.methods, exp.trials)
    out = Path(exp.output_dir)
    try:
        paths = res.write_csv(out)
        write_config(exp, out / "experiment.cfg")
    except OSError as exc:
        raise CliError(f"cannot write results to {out}: {exc.strerror}") from None
    width = max(len(n) for n in res.names)
    print(f"{'method':<{width}}  final_mean_nrmse  step_time_us")
    for name in res.names:
        m, s = res.time_stats(name)
        print(f"{name:<{width}}  {res.final_nrmse(name):16.6g}  {m / 1e3:.2f} +- {s / 1e3:.2f}")
    flags = res.divergences()
    for name, trial, n in flags:
        print(f"warning: {name} diverged in trial {trial} at n = {n}", file=sys.stderr)
    print(f"wrote {paths['summary_nrmse']}")
    return 1 if (flags and args.strict) else 0


def _read_summary(path: Path):
    if path.is_dir():
        path = path / "summary_nrmse.csv"
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(f"cannot read summary {path}: {exc.strerror}") from None
    if not rows:
        raise CliError(f"summary {path} holds no data")
    series: dict = {}
    for row in rows:
        try:
            series.setdefault(row["method"], []).append((int(row["n"]), row["mean_nrmse"]))
        except (KeyError, TypeError, ValueError):
            raise CliError(f"summary {path} is not a method,n,mean_nrmse,... file") from None
    return path, series


def cmd_plotdata(args) -> int:
    """Reshape a summary into one column per method, indexed by ``n``."""
    path, series = _read_summary(Path(args.summary))
    names = list(series)
    if args.methods:
        wanted = _split(args.methods)
        missing = [m for m in wanted if m not in series]
        if missing:
            raise CliError(f"method(s) not in summary: {', '.join(missing)}")
        names = wanted
    index = sorted({n for name in names for n, _ in series[name]})
    cols = {name: dict(series[name]) for name in names}
    out_dir = Path(args.output_dir) if args.output_dir else path.parent
    out = out_dir / "nrmse_vs_n.csv"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n"] + names)
            for n in index:
                w.writerow([n] + [cols[name].get(n, "nan") for name in names])
    except OSError as exc:
        raise CliError(f"cannot write {out}: {exc.strerror}") from None
    print(f"wrote {out} ({len(index)} rows, {len(names)} methods)")
    return 0


def cmd_tune(args) -> int:
    exp = load_experiment(args)
    best, scores = tune(exp.scenario, exp.methods, seeds=args.seeds)
    methods = [m.replace(lam=best[m.name]) if m.name in best else m for m in exp.methods]
    tuned = ExperimentFile(exp.scenario, methods, exp.trials, exp.output_dir, exp.preset)
    out = Path(exp.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "tune_scores.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "lam", "score"])
            for (name, lam), s in scores.items():
                w.writerow([name, repr(lam), "{:.17g}".format(s)])
        write_config(tuned, out / "tuned.cfg")
    except OSError as exc:
        raise CliError(f"cannot write tuning results to {out}: {exc.strerror}") from None
    for name, lam in best.items():
        print(f"{name}: lam = {lam:.6g}")
    print(f"wrote {out / 'tuned.cfg'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orhorls", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_flags(p):
        p.add_argument("--config", help="experiment file")
        p.add_argument("--preset", help=f"named scenario ({', '.join(sorted(PRESETS))})")
        p.add_argument("--trials", type=int, help="number of Monte-Carlo trials")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--methods", help="comma-separated subset of method names")
        p.add_argument("--output-dir", help="directory for the results")

    run = sub.add_parser("run", help="run an experiment and write CSV results")
    scenario_flags(run)
    run.add_argument("--strict", action="store_true",
                     help="exit nonzero if any trial diverged")
    run.set_defaults(func=cmd_run)

    plot = sub.add_parser("plotdata", help="reshape a summary into plot-ready columns")
    plot.add_argument("summary", help="summary_nrmse.csv or the directory holding it")
    plot.add_argument("--methods", help="comma-separated subset of method names")
    plot.add_argument("--output-dir", help="directory for nrmse_vs_n.csv")
    plot.set_defaults(func=cmd_plotdata)

    tn = sub.add_parser("tune", help="grid-search the penalty weights on held-out seeds")
    scenario_flags(tn)
    tn.add_argument("--seeds", type=int, default=3, help="held-out streams (default 3)")
    tn.set_defaults(func=cmd_tune)
    parser.epilog = "lambda grid: " + ", ".join(f"{v:.3g}" for v in LAMBDA_GRID)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
