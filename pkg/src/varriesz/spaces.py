"""Variable exponent Lebesgue spaces on a grid: modular and Luxemburg norm."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import ExponentField, ScalarField

MAX_BISECTIONS = 200
MAX_BRACKET_STEPS = 60
RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class NormResult:
    value: float
    iterations: int
    residual: float

    def __float__(self):
        return self.value


def _check_pair(f: ScalarField, p: ExponentField) -> None:
    if f.grid != p.grid:
        raise ValueError("field and exponent live on different grids")
    if not np.array_equal(f.mask, p.mask):
        raise ValueError("field and exponent have different masks")
    if p.lo < 1:
        raise ValueError(f"exponent must satisfy p >= 1, found min {p.lo}")


def _modular_of(a: np.ndarray, pv: np.ndarray, cell: float, lam: float) -> float:
    with np.errstate(over="ignore"):
        return cell * float(np.sum(np.power(a / lam, pv)))


def modular(f: ScalarField, p: ExponentField) -> float:
    """``h^n * sum |f|^p`` over the mask."""
    _check_pair(f, p)
    return _modular_of(np.abs(f.masked), p.base.masked, f.grid.cell_volume, 1.0)


def luxemburg_norm(f: ScalarField, p: ExponentField) -> NormResult:
    """Luxemburg norm ``inf{lam > 0 : modular(f/lam) <= 1}`` by bisection.

    The map ``lam -> modular(f/lam)`` is continuous and strictly decreasing
    for f != 0, so the norm is the unique root of ``modular(f/lam) = 1``.
    The bracket starts at ``sup|f| * max(1, |Omega|)`` (where the modular is
    at most one) and is widened by doubling/halving.
    """
    _check_pair(f, p)
    keep = f.masked != 0
    a = np.abs(f.masked[keep])
    if a.size == 0:
        return NormResult(0.0, 0, 0.0)
    pv = p.base.masked[keep]
    cell = f.grid.cell_volume

    def rho(lam):
        return _modular_of(a, pv, cell, lam)

    hi = float(a.max()) * max(1.0, f.measure)
    steps = 0
    while not (rho(hi) <= 1.0):
        hi *= 2.0
        steps += 1
        if steps > MAX_BRACKET_STEPS:
            raise ArithmeticError("luxemburg_norm: could not bracket the norm from above")
    lo = hi
    steps = 0
    while rho(lo) <= 1.0:
        lo *= 0.5
        steps += 1
        if steps > 4 * MAX_BRACKET_STEPS:
            raise ArithmeticError("luxemburg_norm: could not bracket the norm from below")

    # invariant: rho(lo) > 1 >= rho(hi)
    it = 0
    mid = hi
    res = abs(rho(hi) - 1.0)
    while it < MAX_BISECTIONS:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        r = rho(mid)
        res = abs(r - 1.0)
        if res <= RESIDUAL_TOL:
            break
        if r > 1.0:
            lo = mid
        else:
            hi = mid
    # report whichever bracket end is closer to the unit level
    best, best_res = mid, res
    for cand in (lo, hi):
        rc = abs(rho(cand) - 1.0)
        if rc < best_res:
            best, best_res = cand, rc
    return NormResult(float(best), it, float(best_res))


def norm(f: ScalarField, p: ExponentField) -> float:
    return luxemburg_norm(f, p).value


def sharp_exponent(p: ExponentField, alpha: ExponentField) -> ExponentField:
    """Sobolev-type exponent ``n p / (n - alpha p)``; needs ``sup(alpha p) < n``."""
    if p.grid != alpha.grid:
        raise ValueError("p and alpha live on different grids")
    n = p.grid.dim
    ap = np.asarray(alpha.values) * np.asarray(p.values)
    mask = p.mask & alpha.mask
    bad = mask & (ap >= n)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise ValueError(f"sharp_exponent: alpha*p = {ap[idx]:.6g} >= n = {n} at cell {idx}")
    vals = n * np.asarray(p.values) / (n - np.where(ap < n, ap, 0.0))
    return ExponentField(ScalarField(p.grid, vals, mask))


def riesz_order_from_s(s: ExponentField) -> ExponentField:
    """Order ``alpha = n - s (n - 1)`` of the potential with kernel exponent ``s (n - 1)``."""
    n = s.grid.dim
    return s.map(lambda v: n - v * (n - 1))


def check_s_range(s: ExponentField) -> None:
    n = s.grid.dim
    upper = n / (n - 1)
    if s.lo < 1:
        raise ValueError(f"s must satisfy 1 <= s, found min {s.lo}")
    if not s.hi < upper:
        raise ValueError(f"s must satisfy s < n/(n-1) = {upper:.6g}, found max {s.hi}")


def poincare_target_exponent(s: ExponentField, p: float, n: int | None = None) -> ExponentField:
    """Target exponent ``q(x)`` of the Sobolev-Poincare inequality.

    ``p == 1``: ``q = n / (s (n-1))``.  ``p > 1``: ``q = n p / (p n (s-1) + n - s p)``,
    which requires ``p < n / (n - s_min (n-1))``.
    """
    n = s.grid.dim if n is None else int(n)
    if n != s.grid.dim:
        raise ValueError(f"dimension {n} does not match grid dimension {s.grid.dim}")
    check_s_range(s)
    p = float(p)
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if p == 1.0:
        return s.map(lambda v: n / (v * (n - 1)))
    limit = n / (n - s.lo * (n - 1))
    if not p < limit:
        raise ValueError(f"p must satisfy p < n/(n - s_min (n-1)) = {limit:.6g}, got {p}")
    return s.map(lambda v: n * p / (p * n * (v - 1) + n - v * p))


def normalize(f: ScalarField, p: ExponentField, target: float) -> ScalarField:
    """Rescale ``f`` so that its Luxemburg norm equals ``target``."""
    if not target > 0 or not math.isfinite(target):
        raise ValueError("normalize: target must be a positive number")
    nrm = luxemburg_norm(f, p).value
    if nrm == 0:
        raise ValueError("normalize: cannot rescale the zero function")
    return f.scaled(target / nrm)
