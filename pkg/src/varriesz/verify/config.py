"""Experiment configuration: INI files with per-experiment defaults.

Example::

    [experiment]
    id = weak_type
    seed = 0
    resolution = 128
    compare_resolution = 256

    [domain]
    kind = unit_square

    [battery]
    kind = mixed
    size = 50

    [exponents]
    alpha = linear:0.8,0.4,0
    p = linear:1,0,0.2

    [schedule]
    thresholds = 16

    [tolerance]
    stability = 0.25

Exponent specs are ``const:v``, ``linear:c0,a1,...,an`` (meaning
``c0 + a1 x1 + ... + an xn``), ``domain_s`` (the domain's s field) and
``order_from_s`` (``n - s (n-1)`` built from the domain's s field).
"""

from __future__ import annotations

import configparser
import copy
import re
from pathlib import Path

import numpy as np

from ..fields import ExponentField, Grid

SECTIONS = ("experiment", "domain", "battery", "exponents", "schedule", "tolerance")

_COMMON = {
    "experiment": {"seed": 0, "resolution": 128, "compare_resolution": 256, "eval_per_axis": 64},
    "domain": {"kind": "unit_square"},
    "battery": {"kind": "mixed", "size": 50},
    "exponents": {"alpha": "linear:0.8,0.4,0", "p": "linear:1,0,0.2"},
    "schedule": {"thresholds": 16},
    "tolerance": {"stability": 0.25},
}

_SPECIFIC = {
    "exponential_decay": {
        "experiment": {"resolution": 256, "compare_resolution": 0},
        "battery": {"kind": "gaussian", "size": 10},
        "schedule": {"span": "fit"},
        "exponents": {"alpha": "const:1"},
        "tolerance": {"r2": 0.9},
    },
    "weak_type": {},
    "maximal_weak_type": {},
    "tail_bound": {"schedule": {"points": 16, "radii": 12}},
    "hedberg": {"exponents": {"eps_factor": 0.5}},
    "samko": {},
    "strong_type": {"exponents": {"p": "linear:1.2,0,0.2"}},
    "poincare": {
        "domain": {"kind": "disk", "radius": 1.0},
        "battery": {"kind": "smooth", "size": 20},
        "exponents": {"p": "1"},
    },
    "chains": {
        "experiment": {"resolution": 256, "compare_resolution": 0},
        "domain": {"kind": "disk", "radius": 1.0},
        "schedule": {"points": 50},
    },
    "exp_integrability": {
        "domain": {"kind": "disk", "radius": 1.0},
        "battery": {"kind": "smooth", "size": 20},
        "exponents": {"alpha": "order_from_s"},
        "schedule": {"a_min": 0.0625, "a_max": 16.0, "a_count": 33, "levels": 64},
        "tolerance": {"budget_factor": 2.0},
    },
}

EXPERIMENTS = tuple(_SPECIFIC)


class ConfigError(ValueError):
    pass


def defaults(experiment: str) -> dict:
    if experiment not in _SPECIFIC:
        raise ConfigError(f"unknown experiment id {experiment!r}; known: {', '.join(EXPERIMENTS)}")
    cfg = copy.deepcopy(_COMMON)
    for sec, vals in _SPECIFIC[experiment].items():
        cfg[sec].update(vals)
    cfg["experiment"]["id"] = experiment
    return cfg


def _coerce(text: str):
    t = text.strip()
    for conv in (int, float):
        try:
            return conv(t)
        except ValueError:
            pass
    return t


def _key_lines(text: str) -> dict:
    """Map (section, key) to its 1-based line number."""
    out, section = {}, None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            section = m.group(1).strip().lower()
            out[(section, None)] = i
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            out[(section, m.group(1).strip().lower())] = i
    return out


def parse_config(text: str, experiment: str | None = None) -> dict:
    """Parse INI text over the defaults of its experiment id."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{exc.message if hasattr(exc, 'message') else exc}") from None
    lines = _key_lines(text)
    for sec in cp.sections():
        if sec.lower() not in SECTIONS:
            raise ConfigError(f"line {lines.get((sec.lower(), None), '?')}: unknown section [{sec}]")
    exp = experiment
    if cp.has_option("experiment", "id"):
        exp = cp.get("experiment", "id").strip()
        if exp not in _SPECIFIC:
            raise ConfigError(f"line {lines.get(('experiment', 'id'), '?')}: unknown experiment id {exp!r}")
    if exp is None:
        raise ConfigError("config names no experiment id")
    cfg = defaults(exp)
    for sec in cp.sections():
        for key, val in cp.items(sec):
            cfg[sec.lower()][key] = _coerce(val)
    cfg["_lines"] = {f"{s}.{k}": v for (s, k), v in lines.items() if k}
    validate(cfg)
    return cfg


def load_config(path, experiment: str | None = None) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), experiment)


def _where(cfg, sec, key) -> str:
    line = cfg.get("_lines", {}).get(f"{sec}.{key}")
    return f"line {line}: " if line else ""


def validate(cfg: dict) -> None:
    ex = cfg["experiment"]
    for key in ("seed", "resolution", "compare_resolution", "eval_per_axis"):
        if not isinstance(ex.get(key), int) or ex[key] < 0:
            raise ConfigError(f"{_where(cfg, 'experiment', key)}experiment.{key} must be a non-negative integer")
    if ex["resolution"] < 4:
        raise ConfigError(f"{_where(cfg, 'experiment', 'resolution')}resolution must be >= 4")
    for key in ("stability", "r2", "budget_factor"):
        v = cfg["tolerance"].get(key)
        if v is not None and not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"{_where(cfg, 'tolerance', key)}tolerance.{key} must be a positive number")
    span = cfg["schedule"].get("span")
    if span is not None and span not in ("observed", "fit"):
        raise ConfigError(f"{_where(cfg, 'schedule', 'span')}schedule.span must be 'observed' or 'fit'")
    for key in ("alpha", "p"):
        v = cfg["exponents"].get(key)
        if v is not None:
            try:
                _parse_spec(str(v))
            except ValueError as exc:
                raise ConfigError(f"{_where(cfg, 'exponents', key)}{exc}") from None


def _parse_spec(spec: str):
    spec = spec.strip()
    if spec in ("domain_s", "order_from_s"):
        return spec, []
    if ":" not in spec:
        try:
            return "const", [float(spec)]
        except ValueError:
            raise ValueError(f"cannot parse exponent spec {spec!r}") from None
    name, _, args = spec.partition(":")
    try:
        vals = [float(a) for a in args.split(",") if a.strip()]
    except ValueError:
        raise ValueError(f"non-numeric argument in exponent spec {spec!r}") from None
    if name == "const" and len(vals) == 1:
        return name, vals
    if name == "linear" and len(vals) >= 2:
        return name, vals
    raise ValueError(f"cannot parse exponent spec {spec!r}")


def parse_exponent(spec, grid: Grid, mask, domain=None) -> ExponentField:
    """Build an exponent field on ``grid`` restricted to ``mask``."""
    name, vals = _parse_spec(str(spec))
    if name == "const":
        return ExponentField.constant(grid, vals[0], mask)
    if name == "linear":
        coeffs = vals[1:]
        if len(coeffs) != grid.dim:
            raise ValueError(f"linear exponent needs {grid.dim} slopes, got {len(coeffs)}")
        values = vals[0] + sum(a * x for a, x in zip(coeffs, grid.centers))
        return ExponentField.from_values(grid, np.asarray(values), mask)
    if domain is None:
        raise ValueError(f"exponent spec {spec!r} needs a domain")
    s = domain.s_field
    if name == "domain_s":
        return s
    n = grid.dim
    return s.map(lambda v: n - v * (n - 1))
