"""Variable-order Riesz potentials and fractional maximal functions on a grid.

The potential is evaluated by direct summation over the masked support,

    I f(x) = h^n * sum_{y != x} |f(y)| |x - y|^(alpha(x) - n)  +  self-cell term,

where the self-cell term integrates the kernel exactly over the ball with
the same volume as one cell.  Because the cell centres form a lattice,
``log |x - y|`` only depends on the index offset and is tabulated once per
grid; kernel rows are gathered from that table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .fields import ExponentField, Grid, ScalarField
from .spaces import luxemburg_norm, sharp_exponent

GATHER_BUDGET = 1 << 22   # kernel entries materialised per chunk
NORM_SLACK = 1e-9


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n, ``n * omega_n``."""
    return n * unit_ball_volume(n)


# ------------------------------------------------------------ evaluation sets

@dataclass(frozen=True, eq=False)
class EvalSet:
    """Masked cells at which pointwise operators are evaluated."""

    grid: Grid
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1, self.grid.dim)
        if len(idx) and (idx.min() < 0 or idx.max() >= self.grid.resolution):
            raise ValueError("evaluation index outside the grid")
        flat = np.ravel_multi_index(tuple(idx.T), self.grid.shape) if len(idx) else idx[:, 0]
        if len(np.unique(flat)) != len(flat):
            raise ValueError("duplicate evaluation points")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.grid.lo) + (self.indices + 0.5) * self.grid.h

    @property
    def flat(self) -> np.ndarray:
        return np.ravel_multi_index(tuple(self.indices.T), self.grid.shape)

    def check_masked(self, mask: np.ndarray) -> None:
        inside = mask[tuple(self.indices.T)]
        if not inside.all():
            bad = self.indices[np.argmin(inside)]
            raise ValueError(f"evaluation point {tuple(int(v) for v in bad)} is not masked")

    @classmethod
    def all_masked(cls, grid: Grid, mask) -> "EvalSet":
        return cls(grid, np.argwhere(np.asarray(getattr(mask, "mask", mask))))

    @classmethod
    def stratified(cls, grid: Grid, mask, per_axis: int = 64) -> "EvalSet":
        """Every ``stride``-th masked cell per axis, about ``per_axis`` per axis."""
        mask = np.asarray(getattr(mask, "mask", mask), dtype=bool)
        stride = max(1, grid.resolution // per_axis)
        off = stride // 2
        sel = np.zeros(grid.shape, dtype=bool)
        sel[tuple(slice(off, None, stride) for _ in range(grid.dim))] = True
        sel &= mask
        if not sel.any():
            sel = mask
        return cls(grid, np.argwhere(sel))

    @classmethod
    def from_points(cls, grid: Grid, mask, points) -> "EvalSet":
        """Cells containing the given points (duplicates merged, order kept)."""
        mask = np.asarray(getattr(mask, "mask", mask), dtype=bool)
        idx = [grid.index_of(p) for p in np.atleast_2d(points)]
        seen, out = set(), []
        for k in idx:
            if k not in seen:
                seen.add(k)
                out.append(k)
        es = cls(grid, np.array(out))
        es.check_masked(mask)
        return es

    def nearest_assignment(self, mask: np.ndarray) -> np.ndarray:
        """For each masked cell the position (in this set) of the nearest point."""
        tree = cKDTree(self.indices.astype(float))
        cells = np.argwhere(mask).astype(float)
        _, which = tree.query(cells)
        out = np.full(self.grid.shape, -1, dtype=np.int64)
        out[mask] = which
        return out

    def extend(self, values, mask: np.ndarray) -> ScalarField:
        """Piecewise-constant extension of point values to all masked cells."""
        values = np.asarray(values, dtype=float)
        owner = self.nearest_assignment(mask)
        out = np.where(mask, values[np.clip(owner, 0, None)], 0.0)
        return ScalarField(self.grid, out, mask)


# ------------------------------------------------------------ kernel tables

@lru_cache(maxsize=8)
def _log_distance_table(grid: Grid) -> np.ndarray:
    """``log |o| h`` for all index offsets o in (-N, N)^n; +inf at o = 0."""
    N = grid.resolution
    o = np.arange(-(N - 1), N, dtype=float)
    d2 = np.zeros((2 * N - 1,) * grid.dim)
    for a in range(grid.dim):
        shp = [1] * grid.dim
        shp[a] = -1
        d2 = d2 + (o ** 2).reshape(shp)
    with np.errstate(divide="ignore"):
        t = 0.5 * np.log(d2) + math.log(grid.h)
    t[(N - 1,) * grid.dim] = np.inf
    t = t.ravel()
    t.setflags(write=False)
    return t


def _offset_positions(grid: Grid, idx: np.ndarray) -> np.ndarray:
    T = 2 * grid.resolution - 1
    strides = T ** np.arange(grid.dim - 1, -1, -1)
    return idx @ strides


def _table_shift(grid: Grid) -> int:
    T = 2 * grid.resolution - 1
    return int((grid.resolution - 1) * np.sum(T ** np.arange(grid.dim)))


def _kernel_rows(grid, logtab, ypos, xpos, alpha_vals, cache):
    """Kernel matrix ``|x-y|^(alpha(x)-n)`` for a block of eval points."""
    n = grid.dim
    gather = ypos[None, :] - xpos[:, None] + _table_shift(grid)
    if cache is not None:
        return cache[gather]
    expo = (alpha_vals - n)[:, None]
    return np.exp(expo * logtab[gather])


def _potential_core(grid: Grid, weights: np.ndarray, support_idx: np.ndarray,
                    eval_idx: np.ndarray, alpha_eval: np.ndarray) -> np.ndarray:
    """``sum_y weights[y, b] * |x - y|^(alpha(x) - n)`` for every eval point x.

    ``weights`` has shape (support, B).  Eval points are grouped by their
    exponent value; a group large enough to amortise it gets a full
    exponentiated table, otherwise kernel rows are exponentiated directly.
    """
    m = len(support_idx)
    out = np.zeros((len(eval_idx), weights.shape[1]))
    if m == 0 or len(eval_idx) == 0:
        return out
    logtab = _log_distance_table(grid)
    n = grid.dim
    ypos = _offset_positions(grid, support_idx)
    xpos = _offset_positions(grid, eval_idx)
    levels, inverse = np.unique(alpha_eval, return_inverse=True)
    chunk = max(1, GATHER_BUDGET // m)
    for g, a in enumerate(levels):
        members = np.flatnonzero(inverse == g)
        cache = None
        if len(members) * m > 2 * logtab.size:
            cache = np.exp((a - n) * logtab)
        for s in range(0, len(members), chunk):
            sel = members[s:s + chunk]
            K = _kernel_rows(grid, logtab, ypos, xpos[sel], alpha_eval[sel], cache)
            out[sel] = K @ weights
    return out


def _self_cell(grid: Grid, alpha_eval: np.ndarray) -> np.ndarray:
    """Kernel integral over the ball with one cell's volume: sigma r^a / a."""
    n = grid.dim
    w = unit_ball_volume(n)
    r_eq = (grid.cell_volume / w) ** (1.0 / n)
    return sphere_area(n) * r_eq ** alpha_eval / alpha_eval


def _check_alpha(alpha: ExponentField, grid: Grid, eval_idx: np.ndarray, lower_open=True):
    if alpha.grid != grid:
        raise ValueError("alpha and f live on different grids")
    n = grid.dim
    a = np.asarray(alpha.values)[tuple(eval_idx.T)] if len(eval_idx) else np.zeros(0)
    if not alpha.hi < n or (len(a) and not np.all(a < n)):
        raise ValueError(f"order must satisfy alpha < n = {n}, found max {max(alpha.hi, a.max(initial=0))}")
    low = min(alpha.lo, a.min(initial=np.inf))
    if (lower_open and not low > 0) or low < 0:
        raise ValueError(f"order must satisfy alpha > 0, found min {low}")
    return a


def riesz_potential_many(fs: Sequence[ScalarField], alpha: ExponentField,
                         eval_set: EvalSet) -> np.ndarray:
    """Potentials of several fields on the same grid; returns shape (len(fs), m)."""
    if not fs:
        return np.zeros((0, len(eval_set)))
    grid = fs[0].grid
    for f in fs:
        if f.grid != grid:
            raise ValueError("all fields must share one grid")
        eval_set.check_masked(f.mask)
    if eval_set.grid != grid:
        raise ValueError("evaluation set lives on a different grid")
    idx = eval_set.indices
    a = _check_alpha(alpha, grid, idx)
    W = np.stack([np.where(f.mask, np.abs(f.values), 0.0) for f in fs], axis=-1)
    W = W.reshape(-1, len(fs))
    support = np.flatnonzero(np.any(W != 0, axis=1))
    sup_idx = np.stack(np.unravel_index(support, grid.shape), axis=1)
    vals = _potential_core(grid, W[support] * grid.cell_volume, sup_idx, idx, a)
    own = W[eval_set.flat]
    vals += own * _self_cell(grid, a)[:, None]
    return vals.T


def riesz_potential(f: ScalarField, alpha: ExponentField, eval_set: EvalSet) -> np.ndarray:
    """Variable-order Riesz potential of ``|f|`` at the points of ``eval_set``."""
    return riesz_potential_many([f], alpha, eval_set)[0]


def riesz_tilde(f: ScalarField, s: ExponentField, eval_set: EvalSet) -> np.ndarray:
    """Potential with kernel ``|x-y|^(-s(x)(n-1))``, i.e. order ``n - s(n-1)``."""
    from .spaces import check_s_range, riesz_order_from_s

    check_s_range(s)
    return riesz_potential(f, riesz_order_from_s(s), eval_set)


# ------------------------------------------------------- fractional maximal

def radius_ladder(grid: Grid, mask=None, ratio: float = math.sqrt(2.0)) -> np.ndarray:
    """Geometric radii ``h * ratio**k`` from h up to the first one >= diam(mask).

    For the default ratio the radii are computed as ``h * 2**(k/2)`` so that
    halving h reproduces the coarse ladder bit for bit.
    """
    if mask is None:
        diam = grid.diameter
    else:
        idx = np.argwhere(np.asarray(getattr(mask, "mask", mask)))
        if len(idx) == 0:
            raise ValueError("radius_ladder: empty mask")
        ext = (idx.max(0) - idx.min(0) + 1) * grid.h
        diam = float(np.sqrt((ext ** 2).sum()))
    if ratio <= 1:
        raise ValueError("ladder ratio must exceed 1")
    out = []
    k = 0
    while True:
        if ratio == math.sqrt(2.0):
            r = grid.h * 2.0 ** (k / 2)
        else:
            r = grid.h * ratio ** k
        out.append(r)
        if r >= diam:
            break
        k += 1
    return np.array(out)


def _half_widths(rr2: float, R: int, inner: int) -> dict:
    """Offsets over the leading axes with the half-width along the last axis.

    Includes offset o iff |o|^2 < rr2 (open ball, squared radius in cells).
    """
    out = {}
    lim = rr2 * (1 - 1e-12)
    for lead in np.ndindex(*(2 * R + 1,) * inner):
        o = np.array(lead) - R
        rest = lim - float(o @ o)
        if rest <= 0:
            continue
        w = int(math.floor(math.sqrt(rest)))
        while w * w >= rest:
            w -= 1
        while (w + 1) * (w + 1) < rest:
            w += 1
        out[tuple(int(v) for v in o)] = w
    return out


def ball_sums(f: ScalarField, radii) -> np.ndarray:
    """``h^n * sum_{masked y, |x-y| < r} |f(y)|`` for every cell x and radius r.

    Returns an array of shape (len(radii), *grid.shape).  Computed with
    prefix sums along the last axis; sums over balls that contain no
    support cell are exactly zero.
    """
    return ball_sums_many([f], radii)[:, 0]


def ball_sums_many(fs: Sequence[ScalarField], radii) -> np.ndarray:
    """:func:`ball_sums` for several fields on one grid, shape (R, B, *grid.shape)."""
    grid = fs[0].grid
    if any(f.grid != grid for f in fs):
        raise ValueError("all fields must share one grid")
    N, n = grid.resolution, grid.dim
    g = np.stack([np.where(f.mask, np.abs(f.values), 0.0) for f in fs]) * grid.cell_volume
    # a masked cell always lies in its own ball, so full support needs no counting
    need_count = any(bool(np.any(f.mask & (gi == 0))) for f, gi in zip(fs, g))
    nz = (g != 0).astype(np.int32)
    out = np.zeros((len(radii), len(fs)) + grid.shape)
    for k, r in enumerate(radii):
        rr2 = (r / grid.h) ** 2
        R = min(int(math.ceil(math.sqrt(rr2))), N - 1)
        pad = [(0, 0)] + [(R, R)] * n
        gp = np.pad(g, pad)
        zshape = list(gp.shape)
        zshape[-1] = 1
        P = np.concatenate([np.zeros(zshape), np.cumsum(gp, axis=-1)], axis=-1)
        if need_count:
            C = np.concatenate([np.zeros(zshape, dtype=np.int32),
                                np.cumsum(np.pad(nz, pad), axis=-1, dtype=np.int32)], axis=-1)
            cnt = np.zeros(g.shape, dtype=np.int32)
        S = np.zeros(g.shape)
        for lead, w in _half_widths(rr2, R, n - 1).items():
            w = min(w, N - 1)
            lead_sl = (slice(None),) + tuple(slice(R + o, R + o + N) for o in lead)
            hi_sl = lead_sl + (slice(R + w + 1, R + w + 1 + N),)
            lo_sl = lead_sl + (slice(R - w, R - w + N),)
            S += P[hi_sl]
            S -= P[lo_sl]
            if need_count:
                cnt += C[hi_sl]
                cnt -= C[lo_sl]
        np.maximum(S, 0.0, out=S)
        if need_count:
            S[cnt == 0] = 0.0
        out[k] = S
    return out


def maximal_from_sums(sums: np.ndarray, radii, alpha_vals: np.ndarray, n: int) -> np.ndarray:
    """``max_k r_k^alpha / (omega_n r_k^n) * sums[k]`` cellwise."""
    w = unit_ball_volume(n)
    best = np.zeros(sums.shape[1:])
    for k, r in enumerate(radii):
        val = np.exp(alpha_vals * math.log(r)) / (w * r ** n) * sums[k]
        np.maximum(best, val, out=best)
    return best


def fractional_maximal(f: ScalarField, alpha: ExponentField, radii=None,
                       sums: np.ndarray | None = None) -> ScalarField:
    """Variable-order fractional maximal function over a radius schedule.

    The average uses the full-ball measure ``omega_n r^n`` in the
    denominator while summing only over masked cells.  Pass precomputed
    ``sums`` (from :func:`ball_sums` with the same radii) to reuse them
    across several orders.
    """
    if alpha.grid != f.grid:
        raise ValueError("alpha and f live on different grids")
    if radii is None:
        radii = radius_ladder(f.grid, f.mask)
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        raise ValueError("fractional_maximal: empty radius schedule")
    if np.any(radii <= 0):
        raise ValueError("fractional_maximal: radii must be positive")
    n = f.dim
    if alpha.lo < 0 or not alpha.hi < n:
        raise ValueError(f"order must satisfy 0 <= alpha < n, got [{alpha.lo}, {alpha.hi}]")
    if sums is None:
        sums = ball_sums(f, radii)
    vals = maximal_from_sums(sums, radii, np.asarray(alpha.values), n)
    return ScalarField(f.grid, np.where(f.mask, vals, 0.0), f.mask)


# ------------------------------------------------------------------- tails

def _point_index(grid: Grid, mask: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x)
    if x.dtype.kind in "iu" and x.shape == (grid.dim,):
        k = tuple(int(v) for v in x)
    else:
        k = grid.index_of(x)
    if not mask[k]:
        raise ValueError(f"point {tuple(np.asarray(x).tolist())} is not in a masked cell")
    return np.array(k)


def tail_profile(f: ScalarField, x, radii, alpha: ExponentField) -> np.ndarray:
    """``h^n * sum_{|x-y| >= r} |f(y)| |x-y|^(alpha(x)-n)`` for each r in ``radii``.

    ``x`` is a physical point or an integer cell index.
    """
    grid = f.grid
    k = _point_index(grid, f.mask, x)
    a = float(np.asarray(alpha.values)[tuple(k)])
    n = grid.dim
    w = np.where(f.mask, np.abs(f.values), 0.0).ravel()
    support = np.flatnonzero(w)
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    if support.size == 0:
        return np.zeros(radii.shape)
    sup_idx = np.stack(np.unravel_index(support, grid.shape), axis=1)
    d = grid.h * np.sqrt(((sup_idx - k) ** 2).sum(1))
    keep = d > 0
    d, wk = d[keep], w[support][keep]
    order = np.argsort(d, kind="stable")
    d, wk = d[order], wk[order]
    terms = grid.cell_volume * wk * np.exp((a - n) * np.log(d))
    # suffix sums in distance order; summed from the far end
    suffix = np.concatenate([np.cumsum(terms[::-1])[::-1], [0.0]])
    pos = np.searchsorted(d, radii, side="left")
    return suffix[pos]


def tail_integral(f: ScalarField, x, r: float, alpha: ExponentField) -> float:
    if not r > 0:
        raise ValueError("tail_integral: r must be positive")
    return float(tail_profile(f, x, [r], alpha)[0])


# ------------------------------------------------------ pointwise estimates

@dataclass
class PointwiseComparison:
    """Left/right sides of a pointwise inequality ``left <= c * right``."""

    points: np.ndarray
    left: np.ndarray
    right: np.ndarray
    label: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=float)
        self.right = np.asarray(self.right, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.ratio = np.where(self.right > 0, self.left / self.right, np.nan)

    @property
    def zero_right(self) -> np.ndarray:
        """Positions where the right side vanishes but the left does not."""
        return np.flatnonzero((self.right <= 0) & (self.left > 0))

    @property
    def max_ratio(self) -> float:
        r = self.ratio[np.isfinite(self.ratio)]
        return float(r.max()) if r.size else 0.0

    @property
    def argmax_point(self):
        r = np.where(np.isfinite(self.ratio), self.ratio, -np.inf)
        if not np.isfinite(r).any():
            return None
        return self.points[int(np.argmax(r))].tolist()

    @property
    def calibrated_c(self) -> float:
        return self.max_ratio

    def summary(self) -> dict:
        return {
            "label": self.label,
            "points": int(len(self.left)),
            "max_ratio": self.max_ratio,
            "argmax_point": self.argmax_point,
            "calibrated_c": self.calibrated_c,
            "zero_right_points": [self.points[i].tolist() for i in self.zero_right],
            **self.extra,
        }

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(), indent=2))
        return path

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.points.shape[1]
        cols = [f"x{i + 1}" for i in range(n)] + ["left", "right", "ratio"]
        data = np.column_stack([self.points, self.left, self.right, self.ratio])
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
        return path


def _check_unit_norm(f: ScalarField, p: ExponentField) -> float:
    nrm = luxemburg_norm(f, p).value
    if nrm > 1 + NORM_SLACK:
        raise ValueError(f"hypothesis violated: ||f||_p = {nrm:.6g} > 1")
    return nrm


def _check_alpha_p(alpha: ExponentField, p: ExponentField) -> None:
    n = alpha.grid.dim
    ap = (np.asarray(alpha.values) * np.asarray(p.values))[p.mask]
    if not ap.max() < n:
        raise ValueError(f"hypothesis violated: (alpha p)^+ = {ap.max():.6g} >= n = {n}")
    if p.lo < 1:
        raise ValueError(f"hypothesis violated: p^- = {p.lo} < 1")


def hedberg_power(delta, eps):
    """Exponent ``delta / (delta + eps)`` on the maximal function."""
    delta = np.asarray(delta, dtype=float)
    return delta / (delta + np.asarray(eps, dtype=float))


def hedberg_check(f: ScalarField, alpha: ExponentField, p: ExponentField,
                  eps: ExponentField, eval_set: EvalSet, radii=None,
                  potential: np.ndarray | None = None,
                  sums: np.ndarray | None = None) -> PointwiseComparison:
    """Compare ``I_alpha f`` with ``max(1, 1/delta)^((p+ - 1)/p+) (M_{alpha-eps} f)^(delta/(delta+eps))``.

    ``delta = (n - alpha p) / p``.  The right side is taken with constant 1,
    so the reported ``calibrated_c`` is the smallest constant that works on
    the evaluation set.
    """
    _check_alpha_p(alpha, p)
    if not np.array_equal(f.mask, p.mask):
        raise ValueError("f and p must share a mask")
    _check_unit_norm(f, p)
    ev = np.asarray(eps.values)[f.mask]
    av = np.asarray(alpha.values)[f.mask]
    if not (ev.min() > 0 and np.all(ev <= av * (1 + 1e-12))):
        raise ValueError("hypothesis violated: need 0 < eps(x) <= alpha(x)")
    n = f.dim
    idx = tuple(eval_set.indices.T)
    left = riesz_potential(f, alpha, eval_set) if potential is None else np.asarray(potential)
    if radii is None:
        radii = radius_ladder(f.grid, f.mask)
    order = alpha.map(lambda a: a - np.asarray(eps.values))
    M = fractional_maximal(f, order, radii, sums=sums).values[idx]
    a = np.asarray(alpha.values)[idx]
    pv = np.asarray(p.values)[idx]
    e = np.asarray(eps.values)[idx]
    delta = (n - a * pv) / pv
    pplus = p.hi
    factor = np.maximum(1.0, 1.0 / delta) ** ((pplus - 1.0) / pplus)
    right = factor * M ** hedberg_power(delta, e)
    return PointwiseComparison(eval_set.points, left, right, label="hedberg")


def samko_check(f: ScalarField, alpha: ExponentField, p: ExponentField,
                eval_set: EvalSet, radii=None, potential: np.ndarray | None = None,
                sums: np.ndarray | None = None) -> PointwiseComparison:
    """Compare ``I_alpha f`` with ``(M f)^(p / p#)`` where ``p# = n p / (n - alpha p)``."""
    _check_alpha_p(alpha, p)
    if not np.array_equal(f.mask, p.mask):
        raise ValueError("f and p must share a mask")
    _check_unit_norm(f, p)
    idx = tuple(eval_set.indices.T)
    left = riesz_potential(f, alpha, eval_set) if potential is None else np.asarray(potential)
    if radii is None:
        radii = radius_ladder(f.grid, f.mask)
    zero = ExponentField.constant(f.grid, 0.0, f.mask)
    M = fractional_maximal(f, zero, radii, sums=sums).values[idx]
    psharp = sharp_exponent(p, alpha.restrict(p.mask))
    power = np.asarray(p.values)[idx] / np.asarray(psharp.values)[idx]
    right = M ** power
    return PointwiseComparison(eval_set.points, left, right, label="samko",
                               extra={"power_min": float(power.min()) if power.size else None,
                                      "power_max": float(power.max()) if power.size else None})
