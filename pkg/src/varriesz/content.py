"""Variable-dimensional Hausdorff content by dyadic covers, and Choquet integrals.

The dyadic estimator solves, over the fixed tree of dyadic cubes of the
bounding box, the recursion

    cost(Q) = 0                                   if Q misses E
            = min(r_Q ** beta(c_Q), sum cost(children))   otherwise

with r_Q the half-diagonal of Q and c_Q its centre.  Leaves take the ball
term.  The result is the cost of an explicit ball cover, so it bounds the
content of the union of the cells from above.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve

from .fields import ExponentField, Grid, ScalarField
from .report import Check, Report

AXIOM_TOL = 1e-12


@dataclass(frozen=True)
class Cover:
    """Ball cover ``{B(x_i, r_i)}`` with cost ``sum r_i ** beta(x_i)``.

    Squared radii are stored so that costs of dyadic balls are evaluated
    exactly as ``(r^2) ** (beta / 2)``.
    """

    centers: np.ndarray
    radii_sq: np.ndarray
    betas: np.ndarray

    @property
    def radii(self) -> np.ndarray:
        return np.sqrt(self.radii_sq)

    @property
    def terms(self) -> np.ndarray:
        return np.power(self.radii_sq, self.betas / 2)

    @property
    def cost(self) -> float:
        return math.fsum(self.terms.tolist())

    def __len__(self):
        return len(self.radii_sq)

    def covers(self, grid: Grid, E: np.ndarray) -> bool:
        """True when every cell of ``E`` lies inside one of the closed balls."""
        E = np.asarray(E, dtype=bool)
        if not E.any():
            return True
        hit = np.zeros(grid.shape, dtype=bool)
        lo = grid.lo_array
        for c, r in zip(self.centers, self.radii):
            a = np.floor((c - r - lo) / grid.h).astype(int)
            b = np.ceil((c + r - lo) / grid.h).astype(int)
            win = tuple(slice(max(0, i), min(grid.resolution, j + 1)) for i, j in zip(a, b))
            if any(w.start >= w.stop for w in win):
                continue
            d2 = 0.0
            for ax, w in enumerate(win):
                # farthest corner of each cell along this axis
                x = np.abs(lo[ax] + (np.arange(w.start, w.stop) + 0.5) * grid.h - c[ax]) + 0.5 * grid.h
                shp = [1] * grid.dim
                shp[ax] = -1
                d2 = d2 + (x ** 2).reshape(shp)
            hit[win] |= np.sqrt(d2) <= r * (1 + 1e-12)
        return bool(hit[E].all())

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.centers.shape[1] if len(self) else 0
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i + 1}" for i in range(n)] + ["r", "beta", "cost"])
            for c, r, b, t in zip(self.centers, self.radii, self.betas, self.terms):
                w.writerow([repr(float(v)) for v in c] + [repr(float(r)), repr(float(b)), repr(float(t))])
        return path


@dataclass(frozen=True)
class ContentEstimate:
    value: float
    cover: Cover
    method: str
    depth: int

    def to_dict(self) -> dict:
        return {"value": self.value, "method": self.method, "depth": self.depth,
                "balls": len(self.cover), "cover_cost": self.cover.cost}

    def to_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def _as_mask(E, grid: Grid) -> np.ndarray:
    E = np.asarray(getattr(E, "mask", E), dtype=bool)
    if E.shape != grid.shape:
        raise ValueError(f"set has shape {E.shape}, grid has {grid.shape}")
    return E


def _check_beta(beta: ExponentField) -> None:
    if not beta.lo > 0:
        raise ValueError(f"content exponent must be positive, found min {beta.lo}")


def max_dyadic_depth(grid: Grid) -> int:
    """Deepest level whose cubes are unions of whole cells."""
    N, d = grid.resolution, 0
    while N % 2 == 0:
        N //= 2
        d += 1
    return d


def beta_at(beta: ExponentField, points: np.ndarray) -> np.ndarray:
    """Multilinear interpolation of ``beta`` between cell centres."""
    grid = beta.grid
    coords = (np.atleast_2d(points) - grid.lo_array) / grid.h - 0.5
    return ndimage.map_coordinates(np.asarray(beta.values, dtype=float), coords.T,
                                   order=1, mode="nearest")


def _cube_centers(grid: Grid, level: int) -> tuple[np.ndarray, float]:
    k = 2 ** level
    side = grid.side / k
    ax = grid.lo_array[:, None] + (np.arange(k) + 0.5) * side
    mesh = np.meshgrid(*ax, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1), side


def _ball_cost(grid: Grid, beta: ExponentField, level: int) -> tuple[np.ndarray, np.ndarray, float]:
    cache = beta.__dict__.setdefault("_dyadic_ball_cost", {})
    if level not in cache:
        cache[level] = _ball_cost_uncached(grid, beta, level)
    return cache[level]


def _ball_cost_uncached(grid: Grid, beta: ExponentField, level: int):
    centers, side = _cube_centers(grid, level)
    b = beta_at(beta, centers)
    # r^beta written as (r^2)^(beta/2); r^2 = n (side/2)^2 keeps powers of two exact
    cost = np.power(grid.dim * (side / 2) ** 2, b / 2)
    shape = (2 ** level,) * grid.dim
    return cost.reshape(shape), b.reshape(shape), side


def _children_sum(a: np.ndarray, n: int) -> np.ndarray:
    k = a.shape[0] // 2
    shp = []
    for _ in range(n):
        shp += [k, 2]
    return a.reshape(shp).sum(axis=tuple(range(1, 2 * n, 2)))


def _block_any(E: np.ndarray, k: int) -> np.ndarray:
    n = E.ndim
    b = E.shape[0] // k
    shp = []
    for _ in range(n):
        shp += [k, b]
    return E.reshape(shp).any(axis=tuple(range(1, 2 * n, 2)))


def dyadic_content(E, beta: ExponentField, max_depth: int | None = None,
                   verify: bool = True) -> ContentEstimate:
    """Optimal cover over the dyadic tree of the bounding box.

    ``max_depth`` defaults to the deepest level made of whole cells; ties
    between a ball and its children's cover keep the single ball.
    """
    _check_beta(beta)
    grid = beta.grid
    E = _as_mask(E, grid)
    deepest = max_dyadic_depth(grid)
    depth = deepest if max_depth is None else int(max_depth)
    if depth < 0:
        raise ValueError("max_depth must be non-negative")
    if depth > deepest:
        raise ValueError(f"max_depth {depth} is finer than the grid (deepest level {deepest})")
    n = grid.dim
    empty = Cover(np.zeros((0, n)), np.zeros(0), np.zeros(0))
    if not E.any():
        return ContentEstimate(0.0, empty, "dyadic-DP", depth)

    occ = [_block_any(E, 2 ** d) for d in range(depth + 1)]
    balls = [_ball_cost(grid, beta, d) for d in range(depth + 1)]
    cost = np.where(occ[depth], balls[depth][0], 0.0)
    pick = [None] * (depth + 1)
    pick[depth] = occ[depth].copy()
    for d in range(depth - 1, -1, -1):
        child = _children_sum(cost, n)
        ball = balls[d][0]
        take = occ[d] & (ball <= child)
        pick[d] = take
        cost = np.where(occ[d], np.where(take, ball, child), 0.0)
    value = float(cost.reshape(-1)[0])

    # top-down: a cube is used if picked and no ancestor was picked
    centers, radii, betas = [], [], []
    blocked = np.zeros((1,) * n, dtype=bool)
    for d in range(depth + 1):
        if d > 0:
            for ax in range(n):
                blocked = np.repeat(blocked, 2, axis=ax)
        used = pick[d] & ~blocked
        if used.any():
            cc, side = _cube_centers(grid, d)
            flat = np.flatnonzero(used.ravel())
            centers.append(cc[flat])
            radii.append(np.full(len(flat), n * (side / 2) ** 2))
            betas.append(balls[d][1].ravel()[flat])
        blocked = blocked | used
    cover = Cover(np.concatenate(centers), np.concatenate(radii), np.concatenate(betas))
    est = ContentEstimate(value, cover, "dyadic-DP", depth)
    if verify:
        if abs(cover.cost - value) > 1e-12 * max(1.0, value):
            raise ArithmeticError(f"cover cost {cover.cost!r} differs from DP value {value!r}")
        if not cover.covers(grid, E):
            raise ArithmeticError("dyadic cover does not cover the set")
    return est


def _footprint(radius: float, h: float, n: int) -> np.ndarray:
    """Cell offsets whose whole cell lies in the closed ball about a cell centre."""
    R = int(math.ceil(radius / h))
    o = np.arange(-R, R + 1)
    mesh = np.meshgrid(*([o] * n), indexing="ij")
    far = sum((np.abs(m) + 0.5) ** 2 for m in mesh)
    return far * h * h <= radius * radius * (1 + 1e-12)


def greedy_content(E, beta: ExponentField, ratio: float = math.sqrt(2.0)) -> ContentEstimate:
    """Greedy ball cover: cheapest cost per newly covered cell, repeatedly.

    Candidate centres are the uncovered cells of ``E``; candidate radii form
    the ladder ``(h sqrt(n)/2) * ratio**k`` up to the first radius whose
    footprint reaches across the set.
    """
    _check_beta(beta)
    grid = beta.grid
    E = _as_mask(E, grid)
    n, h = grid.dim, grid.h
    empty = Cover(np.zeros((0, n)), np.zeros(0), np.zeros(0))
    if not E.any():
        return ContentEstimate(0.0, empty, "greedy", 0)
    idx = np.argwhere(E)
    ext = (idx.max(0) - idx.min(0) + 1) * h
    span = float(np.sqrt((ext ** 2).sum()))
    r0 = h * math.sqrt(n) / 2
    radii = []
    k = 0
    while True:
        r = r0 * ratio ** k
        radii.append(r)
        if r >= span + r0:
            break
        k += 1
    prints = [_footprint(r, h, n) for r in radii]
    bvals = np.asarray(beta.values, dtype=float)
    log_r = np.log(radii)

    uncovered = E.copy()
    centers, rad, bet = [], [], []
    while uncovered.any():
        U = uncovered.astype(float)
        best = (np.inf, None, None)
        for j, fp in enumerate(prints):
            cnt = np.rint(fftconvolve(U, fp, mode="same"))
            cnt = np.where(uncovered, cnt, 0.0)
            with np.errstate(divide="ignore"):
                per = np.where(cnt > 0, np.exp(bvals * log_r[j]) / cnt, np.inf)
            flat = int(np.argmin(per))
            if per.flat[flat] < best[0]:
                best = (per.flat[flat], j, flat)
        _, j, flat = best
        c = np.array(np.unravel_index(flat, grid.shape))
        fp = prints[j]
        R = fp.shape[0] // 2
        win = tuple(slice(max(0, ci - R), min(grid.resolution, ci + R + 1)) for ci in c)
        fwin = tuple(slice(s.start - (ci - R), s.stop - (ci - R)) for s, ci in zip(win, c))
        uncovered[win] &= ~fp[fwin]
        centers.append(grid.lo_array + (c + 0.5) * h)
        rad.append(radii[j] ** 2)
        bet.append(bvals[tuple(c)])
    cover = Cover(np.array(centers), np.array(rad), np.array(bet))
    if not cover.covers(grid, E):
        raise ArithmeticError("greedy cover does not cover the set")
    return ContentEstimate(cover.cost, cover, "greedy", 0)


def content_axioms_check(pairs, beta: ExponentField, max_depth: int | None = None,
                         nested: bool = True) -> Report:
    """Monotonicity and subadditivity of the dyadic estimate over mask pairs.

    With ``nested`` each pair must satisfy A within B and both properties
    are checked; with ``nested=False`` pairs may overlap arbitrarily and
    only subadditivity (plus monotonicity against the union) is checked.
    """
    grid = beta.grid
    rep = Report("content_axioms")
    worst_mono = worst_sub = -np.inf
    for i, (A, B) in enumerate(pairs):
        A, B = _as_mask(A, grid), _as_mask(B, grid)
        if nested and (A & ~B).any():
            raise ValueError(f"pair {i}: A is not contained in B")
        hA = dyadic_content(A, beta, max_depth).value
        hB = dyadic_content(B, beta, max_depth).value
        hU = dyadic_content(A | B, beta, max_depth).value if not nested else hB
        mono = hA - hB if nested else max(hA, hB) - hU
        sub = hU - (hA + hB)
        worst_mono, worst_sub = max(worst_mono, mono), max(worst_sub, sub)
        rep.records.append({"pair": i, "A": hA, "B": hB, "union": hU,
                            "monotone_excess": mono, "subadditive_excess": sub})
    rep.add_check("monotonicity", worst_mono <= AXIOM_TOL, worst_mono, 0.0, AXIOM_TOL,
                  "H(A) <= H(B) for A within B")
    rep.add_check("subadditivity", worst_sub <= AXIOM_TOL, worst_sub, 0.0, AXIOM_TOL,
                  "H(A u B) <= H(A) + H(B)")
    violations = [r["pair"] for r in rep.records
                  if r["monotone_excess"] > AXIOM_TOL or r["subadditive_excess"] > AXIOM_TOL]
    rep.constants["violations"] = violations
    return rep


# ---------------------------------------------------------------- Choquet

@dataclass(frozen=True)
class ChoquetBracket:
    lower: float
    upper: float
    thresholds: np.ndarray
    content_ge: np.ndarray   # H({u >= t_k})
    content_gt: np.ndarray   # H({u > t_k})

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def __iter__(self):
        return iter((self.lower, self.upper))


def default_thresholds(u: ScalarField, levels: int = 64) -> np.ndarray:
    """``0`` followed by ``levels`` geometric levels from min positive to max of ``u``."""
    v = u.masked
    pos = v[v > 0]
    if pos.size == 0:
        return np.array([0.0])
    lo, hi = float(pos.min()), float(pos.max())
    if lo == hi:
        return np.array([0.0, hi])
    return np.concatenate([[0.0], np.geomspace(lo, hi, levels)])


def choquet_integral(u: ScalarField, beta: ExponentField, t_schedule=None,
                     max_depth: int | None = None) -> ChoquetBracket:
    """Lower and upper Riemann sums of ``int_0^inf H({u > t}) dt``.

    On ``[t_k, t_{k+1}]`` the level-set content lies between
    ``H({u >= t_{k+1}})`` and ``H({u > t_k})``.
    """
    if u.grid != beta.grid:
        raise ValueError("u and beta live on different grids")
    vals = np.where(u.mask, u.values, 0.0)
    if (vals < 0).any():
        raise ValueError("choquet_integral needs u >= 0 on the mask")
    t = default_thresholds(u) if t_schedule is None else np.asarray(t_schedule, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0.0:
        raise ValueError("threshold schedule must start at 0")
    if np.any(np.diff(t) <= 0):
        raise ValueError("threshold schedule must be strictly increasing")
    top = float(vals.max())
    if t[-1] < top:
        raise ValueError(f"threshold schedule ends at {t[-1]} below max u = {top}")
    ge, gt = level_contents(vals, u.mask, beta, t, max_depth)
    return choquet_sums(t, ge, gt)


def level_contents(vals: np.ndarray, mask: np.ndarray, beta: ExponentField, levels,
                   max_depth: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Contents of ``{v >= t}`` and ``{v > t}`` within ``mask`` for each level."""
    memo: dict[bytes, float] = {}

    def H(E):
        if not E.any():
            return 0.0
        key = np.packbits(E).tobytes()
        if key not in memo:
            memo[key] = dyadic_content(E, beta, max_depth, verify=False).value
        return memo[key]

    ge = np.array([H(mask & (vals >= tk)) for tk in levels])
    gt = np.array([H(mask & (vals > tk)) for tk in levels])
    return ge, gt


def choquet_sums(t, ge, gt) -> ChoquetBracket:
    """Riemann bracket from level-set contents at the thresholds ``t``."""
    t = np.asarray(t, dtype=float)
    dt = np.diff(t)
    lower = math.fsum((dt * np.asarray(ge)[1:]).tolist())
    upper = math.fsum((dt * np.asarray(gt)[:-1]).tolist())
    return ChoquetBracket(lower, upper, t, np.asarray(ge), np.asarray(gt))
