"""Configurable verification experiments with JSON and CSV output."""

from __future__ import annotations

import csv
from pathlib import Path

from .config import EXPERIMENTS, ConfigError, defaults, load_config, parse_config, parse_exponent
from .experiments import RUNNERS, build_domain, run


def write_table(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return path


def run_experiment(cfg: dict, out=None, timing: bool = True):
    """Run one experiment; write ``<id>.json`` and ``<id>.csv`` under ``out`` if given."""
    rep, (header, rows) = run(cfg)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        exp = cfg["experiment"]["id"]
        rep.to_json(out / f"{exp}.json", timing=timing)
        write_table(out / f"{exp}.csv", header, rows)
    return rep


__all__ = ["EXPERIMENTS", "ConfigError", "defaults", "load_config", "parse_config",
           "parse_exponent", "RUNNERS", "build_domain", "run", "run_experiment", "write_table"]
