"""Experiment files and scenario presets.

The format is a strict sectioned key-value text file::

    # top level
    scenario = fig1a          # optional preset
    trials = 20
    output_dir = results/fig1a

    [scenario]
    snr_db = 10

    [method OR-HO-RLS(ADMM)]
    lam = 2.5

    [method my-variant]
    family = OR-RLS
    penalty = mcp
    inner = cd

Keys outside a section configure the run; ``[scenario]`` overrides
:class:`~orhorls.synthdata.ScenarioConfig` fields; each ``[method NAME]``
either overrides a method of the preset roster or adds a new one (then
``family`` is required).  ``methods = A, B`` restricts and orders the roster.
Unknown keys, repeated keys and malformed lines are errors carrying the line
number.  Values ``none`` map to ``None``.

Scenario defaults: ``alpha = 0.5``, ``eps_varpi = 5e-2``, ``n0 = 500``,
``gamma = 1`` (``0.97`` for the non-stationary preset).
"""
from __future__ import annotations

import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .bench import LAMBDA_GRID, MethodSpec, default_methods
from .synthdata import ScenarioConfig

__all__ = [
    "ConfigError",
    "ExperimentFile",
    "PRESETS",
    "preset",
    "parse_config",
    "parse_config_text",
    "write_config",
    "format_config",
]

TOP_KEYS = ("scenario", "trials", "seed", "output_dir", "methods")


class ConfigError(ValueError):
    """Invalid experiment file; the message starts with ``path:line:``."""


@dataclass
class ExperimentFile:
    scenario: ScenarioConfig
    methods: list
    trials: int
    output_dir: str = "results"
    preset: Optional[str] = None

    def __post_init__(self):
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("methods: names must be unique")
        if not self.methods:
            raise ValueError("methods: at least one method is required")
        if self.trials < 1:
            raise ValueError("trials: must be >= 1")


# Penalty weights are in units of sqrt(mean(diag(R_vv^{-1}))), chosen by
# `tune` on held-out seeds.
def _lams(l1, mcp):
    return {"OR-RLS(ADMM)": l1, "OR-RLS(CD-L1)": l1, "OR-RLS(MCP)": mcp,
            "OR-RLS(CD-MCP)": mcp, "OR-HO-RLS(ADMM)": l1, "OR-HO-RLS(GIST)": mcp,
            "OR-HO-RLS(FMHSDM)": l1}


_LAMS_FIG1A = _lams(LAMBDA_GRID[2], LAMBDA_GRID[3])
_LAMS_FIG1B = _lams(LAMBDA_GRID[2], LAMBDA_GRID[4])
_LAMS_FIG1C = _lams(LAMBDA_GRID[2], LAMBDA_GRID[3])
_LAMS_FIG1D = _lams(LAMBDA_GRID[4], LAMBDA_GRID[5])

PRESETS = {
    "fig1a": (ScenarioConfig(snr_db=20.0, p_o=0.2), _LAMS_FIG1A, "zero", 0.0),
    "fig1b": (ScenarioConfig(snr_db=10.0, p_o=0.1), _LAMS_FIG1B, "zero", 0.0),
    "fig1c": (ScenarioConfig(snr_db=20.0, p_o=0.2, system_kind="sparse"), _LAMS_FIG1C,
              "l1", 0.5),
    "fig1d": (ScenarioConfig(snr_db=20.0, p_o=0.2, change_at=2500, gamma=0.97), _LAMS_FIG1D,
              "zero", 0.0),
}


def preset(name: str):
    """``(ScenarioConfig, [MethodSpec])`` of a named scenario."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    cfg, lams, g_kind, lambda_g = PRESETS[name]
    return cfg, default_methods(g_kind, lambda_g, lams)


# ---------------------------------------------------------------------------
# value conversion

def _hints(cls):
    return typing.get_type_hints(cls)


def _convert(raw: str, hint, key: str):
    text = raw.strip()
    optional = typing.get_origin(hint) is typing.Union and type(None) in typing.get_args(hint)
    if optional:
        if text.lower() == "none":
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is bool:
            low = text.lower()
            if low not in ("true", "false"):
                raise ValueError
            return low == "true"
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
    except ValueError:
        raise ValueError(f"{key}: cannot read {text!r} as {hint.__name__}") from None
    return text


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# parsing

def parse_config(path) -> ExperimentFile:
    """Read and validate an experiment file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config file ({exc.strerror})") from None
    return parse_config_text(text, str(path))


def parse_config_text(text: str, source: str = "<config>") -> ExperimentFile:
    top: dict = {}
    scen: dict = {}
    meth: dict = {}  # name -> {key: (value, line)}
    where: dict = {}  # (section, key) -> line
    section = None  # None, "scenario" or ("method", name)
    sec_line: dict = {}

    def err(line, msg):
        return ConfigError(f"{source}:{line}: {msg}")

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise err(lineno, f"malformed section header {raw.strip()!r}")
            body = line[1:-1].strip()
            if body == "scenario":
                section = "scenario"
            elif body.startswith("method ") and body[7:].strip():
                name = body[7:].strip()
                if name in meth:
                    raise err(lineno, f"duplicate method section {name!r}")
                meth[name] = {}
                section = ("method", name)
            else:
                raise err(lineno, f"unknown section [{body}]")
            sec_line[section] = lineno
            continue
        if "=" not in line:
            raise err(lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not value:
            raise err(lineno, f"expected 'key = value', got {raw.strip()!r}")
        if section is None:
            if key not in TOP_KEYS:
                raise err(lineno, f"unknown key {key!r}")
            target = top
        elif section == "scenario":
            if key not in ScenarioConfig.field_names():
                raise err(lineno, f"unknown scenario key {key!r}")
            target = scen
        else:
            if key == "name" or key not in _method_keys():
                raise err(lineno, f"unknown method key {key!r}")
            target = meth[section[1]]
        if (section, key) in where:
            raise err(lineno, f"duplicate key {key!r}")
        where[(section, key)] = lineno
        target[key] = value

    def line_of(section, key, default=1):
        return where.get((section, key), sec_line.get(section, default))

    # scenario
    name = top.get("scenario")
    if name is not None and name not in PRESETS:
        raise err(line_of(None, "scenario"), f"unknown preset {name!r}; "
                  f"choose from {sorted(PRESETS)}")
    base_cfg, roster = preset(name) if name else (ScenarioConfig(), default_methods())
    hints = _hints(ScenarioConfig)
    values = {}
    for key, raw in scen.items():
        try:
            values[key] = _convert(raw, hints[key], key)
        except ValueError as exc:
            raise err(line_of("scenario", key), str(exc)) from None
    try:
        cfg = base_cfg.replace(**values)
    except ValueError as exc:
        bad = str(exc).split(":", 1)[0]
        raise err(line_of("scenario", bad), str(exc)) from None

    # methods
    mhints = _hints(MethodSpec)
    by_name = {m.name: m for m in roster}
    order = [m.name for m in roster]
    for mname, kv in meth.items():
        sect = ("method", mname)
        conv = {}
        for key, raw in kv.items():
            try:
                conv[key] = _convert(raw, mhints[key], key)
            except ValueError as exc:
                raise err(line_of(sect, key), str(exc)) from None
        try:
            if mname in by_name:
                spec = by_name[mname].replace(**conv)
            else:
                if "family" not in conv:
                    raise ValueError(f"family: required for new method {mname!r}")
                spec = MethodSpec(name=mname, **conv)
                order.append(mname)
        except ValueError as exc:
            bad = str(exc).split(":", 1)[0]
            raise err(line_of(sect, bad), f"method {mname!r}: {exc}") from None
        by_name[mname] = spec
    if "methods" in top:
        chosen = [s.strip() for s in top["methods"].split(",") if s.strip()]
        for m in chosen:
            if m not in by_name:
                raise err(line_of(None, "methods"), f"methods: unknown method {m!r}")
        order = chosen
    methods = [by_name[m] for m in order]

    # run options
    run = {}
    for key, hint in (("trials", int), ("seed", int)):
        if key in top:
            try:
                run[key] = _convert(top[key], hint, key)
            except ValueError as exc:
                raise err(line_of(None, key), str(exc)) from None
    if "seed" in run:
        cfg = cfg.replace(seed=run["seed"])
    trials = run.get("trials", cfg.trials)
    try:
        cfg = cfg.replace(trials=trials)
        return ExperimentFile(cfg, methods, trials, top.get("output_dir", "results"), name)
    except ValueError as exc:
        bad = str(exc).split(":", 1)[0]
        raise err(line_of(None, bad), str(exc)) from None


def _method_keys():
    return [f.name for f in fields(MethodSpec)]


# ---------------------------------------------------------------------------
# writing

def format_config(exp: ExperimentFile) -> str:
    """Fully explicit text form; parsing it gives back an equal :class:`ExperimentFile`."""
    lines = []
    if exp.preset:
        lines.append(f"scenario = {exp.preset}")
    lines.append(f"trials = {exp.trials}")
    lines.append(f"output_dir = {exp.output_dir}")
    lines.append("methods = " + ", ".join(m.name for m in exp.methods))
    lines += ["", "[scenario]"]
    for f in fields(ScenarioConfig):
        lines.append(f"{f.name} = {_fmt(getattr(exp.scenario, f.name))}")
    for m in exp.methods:
        lines += ["", f"[method {m.name}]"]
        for f in fields(MethodSpec):
            if f.name != "name":
                lines.append(f"{f.name} = {_fmt(getattr(m, f.name))}")
    return "\n".join(lines) + "\n"


def write_config(exp: ExperimentFile, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_config(exp))
    return path
