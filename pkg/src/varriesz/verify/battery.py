"""Seeded test-function batteries.

A battery is a list of ``(name, params)`` specs drawn once from a seeded
generator in coordinates relative to a box, so that the same functions
can be sampled on grids of different resolution.
"""

from __future__ import annotations

import numpy as np

from ..fields import Grid, ScalarField, sample_field

KINDS = ("gaussian", "ball", "smooth", "mixed")


def _gaussian(gen, lo, side, n):
    c = lo + side * gen.uniform(0.2, 0.8, n)
    return ("gaussian", {"center": c.tolist(), "width": float(side * gen.uniform(0.05, 0.2)),
                         "amplitude": 1.0})


def _ball(gen, lo, side, n):
    c = lo + side * gen.uniform(0.25, 0.75, n)
    return ("ball_indicator", {"center": c.tolist(), "radius": float(side * gen.uniform(0.05, 0.2)),
                               "value": 1.0})


def _smooth(gen, lo, side, n):
    return ("random_smooth", {"seed": int(gen.integers(0, 2 ** 31 - 1)), "kmax": 4,
                              "amplitude": 1.0})


_MAKERS = {"gaussian": _gaussian, "ball": _ball, "smooth": _smooth}


def battery_specs(kind: str, size: int, seed: int, lo, side: float, dim: int = 2) -> list:
    """Parameters of ``size`` functions of the given kind.

    ``mixed`` cycles gaussian, ball, smooth.  Centres and widths are drawn
    relative to the box ``[lo, lo + side]^dim``.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown battery kind {kind!r}; expected one of {KINDS}")
    if size < 0:
        raise ValueError("battery size must be non-negative")
    gen = np.random.default_rng(seed)
    lo = np.asarray(lo, dtype=float)
    order = ["gaussian", "ball", "smooth"] if kind == "mixed" else [kind]
    return [_MAKERS[order[i % len(order)]](gen, lo, side, dim) for i in range(size)]


def sample_battery(grid: Grid, specs, mask=None, absolute: bool = True) -> list[ScalarField]:
    """Sample battery specs on ``grid``; smooth fields are made nonnegative by default."""
    out = []
    for name, params in specs:
        f = sample_field(grid, name, mask=mask, **params)
        if absolute and name == "random_smooth":
            f = f.abs()
        out.append(f)
    return out
