"""Driving the benchmark from an experiment file, as the command line does.

Equivalent shell session::

    python -m orhorls run --config demo.cfg
    python -m orhorls plotdata results/demo --methods RLS,OR-HO-RLS(GIST)
"""
import tempfile
from pathlib import Path

from orhorls.cli import main

tmp = Path(tempfile.mkdtemp())
cfg = tmp / "demo.cfg"
cfg.write_text(
    "scenario = fig1b          # dense system, 10 dB, 10% outliers\n"
    "trials = 2\n"
    f"output_dir = {tmp / 'out'}\n"
    "methods = RLS, OR-RLS(MCP), OR-HO-RLS(GIST)\n"
    "\n"
    "[scenario]\n"
    "horizon = 2000\n"
)
main(["run", "--config", str(cfg)])
main(["plotdata", str(tmp / "out"), "--methods", "RLS,OR-HO-RLS(GIST)"])
print((tmp / "out" / "nrmse_vs_n.csv").read_text().splitlines()[:3])
