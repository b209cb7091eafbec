"""Structured pass/fail records shared by checks and experiments."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Check:
    """One named inequality with the value observed and the tolerance used."""

    name: str
    passed: bool
    value: float | None
    bound: float | None
    tolerance: float | None
    detail: str = ""


def _plain(x):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return x


def digest(obj) -> str:
    """Stable short hash of a JSON-serialisable description of the inputs."""
    blob = json.dumps(_plain(obj), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class Report:
    experiment: str
    inputs: dict = field(default_factory=dict)
    records: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    runtime: float = 0.0

    def add_check(self, name, passed, value=None, bound=None, tolerance=None, detail=""):
        c = Check(name, bool(passed), value, bound, tolerance, detail)
        self.checks.append(c)
        return c

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self, timing: bool = True) -> dict:
        d = {
            "experiment": self.experiment,
            "inputs_digest": digest(self.inputs),
            "inputs": self.inputs,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "constants": self.constants,
            "records": self.records,
        }
        if timing:
            d["timing"] = {"runtime_s": self.runtime}
        return _plain(d)

    def to_json(self, path, timing: bool = True) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(timing), indent=2, sort_keys=True) + "\n")
        return path
