"""Test domains, distance-to-boundary fields and chains of balls.

Disk and square use exact distance formulas.  Composite domains (cusp,
mushroom) use the distance to a dense sample of their boundary: every
component boundary is sampled at spacing h/4 and samples lying inside the
union are discarded.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .fields import ExponentField, Grid, ScalarField, gradient_magnitude, make_grid, mean_over_ball, save_field
from .potentials import EvalSet, PointwiseComparison, riesz_tilde, unit_ball_volume
from .report import Report

BESICOVITCH_STANDIN = 5     # per-dimension factor used for the overlap ceiling
SAMPLE_FRACTION = 0.25      # boundary sample spacing in units of h


@dataclass(eq=False)
class DomainModel:
    """Masked grid domain with its distance field, John centre and s(.)."""

    grid: Grid
    mask: np.ndarray
    dist: ScalarField
    john_center: np.ndarray
    s_field: ExponentField
    kind: str
    params: dict
    contains: Callable[[np.ndarray], np.ndarray]
    distance: Callable[[np.ndarray], np.ndarray]
    _tree: dict = field(default_factory=dict, repr=False)

    @property
    def base_radius(self) -> float:
        return float(self.distance(self.john_center[None, :])[0])

    @property
    def base_ball(self) -> tuple[np.ndarray, float]:
        return self.john_center, self.base_radius

    @property
    def measure(self) -> float:
        return float(self.mask.sum()) * self.grid.cell_volume

    def manifest(self) -> dict:
        return {"kind": self.kind, "params": self.params, "grid": self.grid.to_json(),
                "john_center": self.john_center.tolist(), "base_radius": self.base_radius,
                "s_range": [self.s_field.lo, self.s_field.hi]}

    def save(self, directory, binary: bool = False) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_field(self.dist, d / "dist", binary=binary, field_kind="distance")
        save_field(self.s_field.base, d / "s_field", binary=binary, field_kind="exponent")
        (d / "geometry.json").write_text(json.dumps(self.manifest(), indent=2))
        return d


def _finish(grid, mask, distance, contains, x0, s_vals, kind, params) -> DomainModel:
    if not mask.any():
        raise ValueError(f"{kind}: empty mask at this resolution")
    pts = np.stack([c[mask] for c in grid.centers], axis=1)
    dvals = np.zeros(grid.shape)
    dvals[mask] = distance(pts)
    if np.any(dvals[mask] <= 0):
        raise ArithmeticError(f"{kind}: non-positive distance on a masked cell")
    dist = ScalarField(grid, dvals, mask)
    s = ExponentField(ScalarField(grid, s_vals, mask))
    return DomainModel(grid, mask, dist, np.asarray(x0, dtype=float), s, kind, params,
                       contains, distance)


def _points_of(grid: Grid) -> np.ndarray:
    return np.stack([c.ravel() for c in grid.centers], axis=1)


def make_disk(radius: float = 1.0, resolution: int = 256, center=None, dim: int = 2,
              bbox=None) -> DomainModel:
    """Open ball of the given radius; the John centre is the ball centre."""
    if not radius > 0:
        raise ValueError("radius must be positive")
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    if bbox is None:
        bbox = [(float(ci - radius), float(ci + radius)) for ci in c]
    grid = make_grid(dim, resolution, bbox)
    if np.any(c - radius < grid.lo_array - 1e-12) or np.any(c + radius > np.asarray(grid.hi) + 1e-12):
        raise ValueError("disk exceeds the bounding box")

    def contains(p):
        return np.sqrt(((np.atleast_2d(p) - c) ** 2).sum(1)) < radius

    def distance(p):
        return np.abs(radius - np.sqrt(((np.atleast_2d(p) - c) ** 2).sum(1)))

    mask = contains(_points_of(grid)).reshape(grid.shape)
    return _finish(grid, mask, distance, contains, c, np.ones(grid.shape), "disk",
                   {"radius": radius, "center": c.tolist()})


def make_square(side: float = 2.0, resolution: int = 256, center=None, dim: int = 2,
                bbox=None) -> DomainModel:
    """Open axis-parallel cube; the John centre is its centre."""
    if not side > 0:
        raise ValueError("side must be positive")
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    half = side / 2
    if bbox is None:
        bbox = [(float(ci - half), float(ci + half)) for ci in c]
    grid = make_grid(dim, resolution, bbox)
    if np.any(c - half < grid.lo_array - 1e-12) or np.any(c + half > np.asarray(grid.hi) + 1e-12):
        raise ValueError("square exceeds the bounding box")

    def contains(p):
        return np.abs(np.atleast_2d(p) - c).max(1) < half

    def distance(p):
        return np.abs(half - np.abs(np.atleast_2d(p) - c).max(1))

    mask = contains(_points_of(grid)).reshape(grid.shape)
    return _finish(grid, mask, distance, contains, c, np.ones(grid.shape), "square",
                   {"side": side, "center": c.tolist()})


# ------------------------------------------------------- sampled boundaries

def _directions(n: int) -> np.ndarray:
    d = np.array([v for v in np.ndindex(*(3,) * n)]) - 1
    d = d[np.any(d != 0, axis=1)].astype(float)
    return d / np.sqrt((d ** 2).sum(1))[:, None]


def _exposed(samples: np.ndarray, contains, eta: float) -> np.ndarray:
    """Drop samples whose whole neighbourhood lies inside the domain."""
    dirs = _directions(samples.shape[1])
    inside_all = np.ones(len(samples), dtype=bool)
    for d in dirs:
        inside_all &= contains(samples + eta * d)
    return samples[~inside_all]


def _sampled_distance(samples: np.ndarray):
    tree = cKDTree(samples)

    def distance(p):
        d, _ = tree.query(np.atleast_2d(p))
        return d

    return distance


def _box_boundary(lo, hi, step) -> np.ndarray:
    """Samples on the boundary of an axis-parallel box (n = 2 or 3)."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    n = len(lo)
    out = []
    for ax in range(n):
        for face in (lo[ax], hi[ax]):
            others = [a for a in range(n) if a != ax]
            grids = [np.linspace(lo[a], hi[a], max(2, int(math.ceil((hi[a] - lo[a]) / step)) + 1))
                     for a in others]
            mesh = np.meshgrid(*grids, indexing="ij")
            pts = np.zeros((mesh[0].size, n))
            pts[:, ax] = face
            for a, m in zip(others, mesh):
                pts[:, a] = m.ravel()
            out.append(pts)
    return np.concatenate(out)


def _sphere_boundary(center, radius, step) -> np.ndarray:
    center = np.asarray(center, float)
    n = len(center)
    if n == 2:
        k = max(8, int(math.ceil(2 * math.pi * radius / step)))
        t = 2 * math.pi * np.arange(k) / k
        return center + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    k = max(32, int(math.ceil(4 * math.pi * radius ** 2 / step ** 2)))
    i = np.arange(k) + 0.5
    phi = np.arccos(1 - 2 * i / k)
    theta = math.pi * (1 + 5 ** 0.5) * i
    u = np.stack([np.cos(phi), np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta)], axis=1)
    return center + radius * u


# ------------------------------------------------------------------- cusp

def make_cusp(s: float, n: int = 2, resolution: int = 256) -> DomainModel:
    """Outward power cusp ``{0 < x1 < 1, |x'| < x1^s}`` joined to ``B((1,0,..), 1/2)``.

    Needs ``1 <= s < n/(n-1)``.  The John centre is the ball centre.
    """
    if n not in (2, 3):
        raise ValueError("cusp is available for n = 2 or 3")
    upper = n / (n - 1)
    if not (1 <= s < upper):
        raise ValueError(f"cusp exponent must satisfy 1 <= s < n/(n-1) = {upper:.6g}, got {s}")
    c = np.zeros(n)
    c[0] = 1.0
    bbox = [(0.0, 1.5)] + [(-0.75, 0.75)] * (n - 1)
    grid = make_grid(n, resolution, bbox)
    step = SAMPLE_FRACTION * grid.h

    def contains(p):
        p = np.atleast_2d(p)
        x1 = p[:, 0]
        rad = np.sqrt((p[:, 1:] ** 2).sum(1))
        with np.errstate(invalid="ignore"):
            horn = (x1 > 0) & (x1 < 1) & (rad < np.power(np.clip(x1, 0, None), s))
        ball = ((p - c) ** 2).sum(1) < 0.25
        return horn | ball

    x1 = np.arange(0.0, 1.0 + step / 2, step)
    parts = [_sphere_boundary(c, 0.5, step)]
    if n == 2:
        rho = x1 ** s
        parts += [np.stack([x1, rho], 1), np.stack([x1, -rho], 1)]
        y = np.arange(-1.0, 1.0 + step / 2, step)
        parts.append(np.stack([np.ones_like(y), y], 1))
    else:
        pts = []
        for a in x1:
            rho = a ** s
            k = max(1, int(math.ceil(2 * math.pi * rho / step)))
            t = 2 * math.pi * np.arange(k) / k
            pts.append(np.stack([np.full(k, a), rho * np.cos(t), rho * np.sin(t)], 1))
        parts.append(np.concatenate(pts))
        for r in np.arange(0.0, 1.0 + step / 2, step):
            k = max(1, int(math.ceil(2 * math.pi * r / step)))
            t = 2 * math.pi * np.arange(k) / k
            parts.append(np.stack([np.ones(k), r * np.cos(t), r * np.sin(t)], 1))
    samples = _exposed(np.concatenate(parts), contains, step / 2)
    distance = _sampled_distance(samples)
    mask = contains(_points_of(grid)).reshape(grid.shape)
    return _finish(grid, mask, distance, contains, c, np.full(grid.shape, float(s)), "cusp",
                   {"s": s, "n": n, "boundary_samples": int(len(samples))})


# --------------------------------------------------------------- mushroom

def mushroom_layout(radii, start: float = 1.0, stop: float = 4.0) -> list[dict]:
    """Placement of mushrooms along the side ``x1 = 0`` of ``[0,12]^2``.

    Each mushroom with parameter r has a stem ``[-r, 0] x [y - phi(r), y + phi(r)]``
    with ``phi(r) = r^(3/2)`` and a cap ``[-3r, -r] x [y - r, y + r]``.  Caps
    are stacked upwards from ``start`` with gap ``r`` and must end by ``stop``.
    """
    out = []
    y = start
    prev = None
    for r in radii:
        r = float(r)
        if not r > 0:
            raise ValueError("mushroom radii must be positive")
        if prev is not None and not r < prev:
            raise ValueError("mushroom radii must decrease")
        phi = r ** 1.5
        if phi > r:
            raise ValueError(f"phi(r) = {phi:.6g} exceeds r = {r:.6g}")
        mid = y + r
        if y + 2 * r > stop + 1e-12:
            raise ValueError(f"mushrooms do not fit between distances {start} and {stop}")
        out.append({"r": r, "phi": phi, "axis": mid,
                    "stem": [[-r, 0.0], [mid - phi, mid + phi]],
                    "cap": [[-3 * r, -r], [mid - r, mid + r]]})
        y = y + 2 * r + r
        prev = r
    return out


def _boxes_disjoint(boxes) -> bool:
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            a, b = boxes[i], boxes[j]
            if all(a[k][0] < b[k][1] and b[k][0] < a[k][1] for k in range(2)):
                return False
    return True


def make_mushroom(radii=None, count: int = 3, resolution: int = 448) -> DomainModel:
    """Square ``Q = [0,12]^2`` with mushrooms attached on the sides ``x1 = 0`` and ``x2 = 0``.

    ``radii`` defaults to ``2^-m`` for ``m = 1..count``.  The layout on the
    side ``x2 = 0`` is the mirror image across the diagonal.  ``s`` is 1 on
    Q, 3/2 on the caps and linear along each stem.
    """
    if radii is None:
        radii = [2.0 ** -m for m in range(1, count + 1)]
    radii = [float(r) for r in radii]
    if len(radii) > 8:
        raise ValueError("at most 8 mushrooms per side")
    grid = make_grid(2, resolution, (-2.0, 12.0))
    h = grid.h
    if min(radii) < 4 * h:
        raise ValueError(f"mushroom radius {min(radii)} is below 4h = {4 * h}")
    layout = mushroom_layout(radii)
    boxes = []
    for m in layout:
        for key in ("stem", "cap"):
            b = m[key]
            boxes.append(b)
            boxes.append([b[1], b[0]])
    caps = [b for m in layout for b in (m["cap"], [m["cap"][1], m["cap"][0]])]
    if not _boxes_disjoint(caps):
        raise ValueError("mushrooms overlap")
    Q = [[0.0, 12.0], [0.0, 12.0]]
    if any(b[0][0] < -2.0 or b[1][0] < -2.0 for b in boxes):
        raise ValueError("mushroom exceeds the bounding box")

    def in_box(p, b):
        return (p[:, 0] > b[0][0]) & (p[:, 0] < b[0][1]) & (p[:, 1] > b[1][0]) & (p[:, 1] < b[1][1])

    def contains(p):
        p = np.atleast_2d(p)
        out = in_box(p, Q)
        for b in boxes:
            out |= in_box(p, b)
        # shared edges between Q, stems and caps are interior
        for m in layout:
            stem, cap = m["stem"], m["cap"]
            for swap in (False, True):
                q = p[:, ::-1] if swap else p
                on_x0 = (q[:, 0] == 0.0) & (q[:, 1] > stem[1][0]) & (q[:, 1] < stem[1][1])
                on_cap = (q[:, 0] == -m["r"]) & (q[:, 1] > stem[1][0]) & (q[:, 1] < stem[1][1])
                out |= on_x0 | on_cap
        return out

    step = SAMPLE_FRACTION * h
    parts = [_box_boundary(*zip(*Q), step)]
    for b in boxes:
        parts.append(_box_boundary(*zip(*b), step))
    samples = _exposed(np.concatenate(parts), contains, step / 2)
    distance = _sampled_distance(samples)
    mask = contains(_points_of(grid)).reshape(grid.shape)

    s_vals = np.ones(grid.shape)
    X, Y = grid.centers
    for m in layout:
        for swap in (False, True):
            A, B = (Y, X) if swap else (X, Y)
            stem, cap = m["stem"], m["cap"]
            in_stem = (A > stem[0][0]) & (A < stem[0][1]) & (B > stem[1][0]) & (B < stem[1][1])
            in_cap = (A > cap[0][0]) & (A < cap[0][1]) & (B > cap[1][0]) & (B < cap[1][1])
            s_vals = np.where(in_stem, 1.0 + 0.5 * (-A / m["r"]), s_vals)
            s_vals = np.where(in_cap, 1.5, s_vals)
    params = {"radii": radii, "phi": "t^(3/2)", "Q": Q, "layout": layout,
              "boundary_samples": int(len(samples))}
    return _finish(grid, mask, distance, contains, np.array([6.0, 6.0]), s_vals,
                   "mushroom", params)


def mushroom_s(D: DomainModel, point) -> float:
    """Value of ``s`` at a physical point of a mushroom domain (analytic)."""
    p = np.asarray(point, dtype=float)
    for m in D.params["layout"]:
        for swap in (False, True):
            a, b = (p[1], p[0]) if swap else (p[0], p[1])
            stem, cap = m["stem"], m["cap"]
            if cap[0][0] < a < cap[0][1] and cap[1][0] < b < cap[1][1]:
                return 1.5
            if stem[0][0] < a < stem[0][1] and stem[1][0] < b < stem[1][1]:
                return 1.0 + 0.5 * (-a / m["r"])
    return 1.0


# ------------------------------------------------------------------ chains

def _neighbour_steps(n: int):
    steps = [np.array(v) - 1 for v in np.ndindex(*(3,) * n)]
    return [s for s in steps if np.any(s)]


def widest_path_tree(D: DomainModel) -> tuple[np.ndarray, np.ndarray]:
    """Parent pointers of max-min clearance paths from the John centre's cell.

    Cells are joined to their 3^n - 1 neighbours.  A path's width is the
    smallest ``dist`` on it; ties are broken by shorter Euclidean length and
    then by flat index.  Returns (parent flat index or -1, width).
    """
    if "tree" in D._tree:
        return D._tree["tree"]
    grid = D.grid
    mask = D.mask
    shape = grid.shape
    dist = np.where(mask, D.dist.values, 0.0).ravel()
    src = np.ravel_multi_index(grid.index_of(D.john_center), shape)
    if not mask.ravel()[src]:
        raise ValueError("John centre is not in a masked cell")
    steps = _neighbour_steps(grid.dim)
    lens = [float(np.sqrt((s ** 2).sum())) * grid.h for s in steps]
    N = grid.resolution
    width = np.full(dist.size, -1.0)
    length = np.full(dist.size, np.inf)
    parent = np.full(dist.size, -1, dtype=np.int64)
    done = np.zeros(dist.size, dtype=bool)
    width[src], length[src] = dist[src], 0.0
    heap = [(-dist[src], 0.0, int(src))]
    flatmask = mask.ravel()
    while heap:
        nw, ln, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        ui = np.unravel_index(u, shape)
        w = -nw
        for s, l in zip(steps, lens):
            vi = tuple(int(a + b) for a, b in zip(ui, s))
            if min(vi) < 0 or max(vi) >= N:
                continue
            v = int(np.ravel_multi_index(vi, shape))
            if not flatmask[v] or done[v]:
                continue
            cw = min(w, dist[v])
            cl = ln + l
            if cw > width[v] or (cw == width[v] and cl < length[v]):
                width[v], length[v], parent[v] = cw, cl, u
                heapq.heappush(heap, (-cw, cl, v))
    out = (parent.reshape(shape), width.reshape(shape))
    D._tree["tree"] = out
    return out


def john_path(D: DomainModel, x) -> np.ndarray:
    """Polyline from the John centre to ``x`` through cell centres."""
    grid = D.grid
    k = grid.index_of(x)
    if not D.mask[k]:
        raise ValueError(f"point {tuple(np.asarray(x).tolist())} is not in the domain mask")
    parent, width = widest_path_tree(D)
    if width[k] < 0:
        raise ValueError("point is not reachable from the John centre inside the mask")
    cells = []
    u = int(np.ravel_multi_index(k, grid.shape))
    flat_parent = parent.ravel()
    while u >= 0:
        cells.append(u)
        u = int(flat_parent[u])
    cells.reverse()
    idx = np.stack(np.unravel_index(np.array(cells), grid.shape), axis=1)
    pts = grid.lo_array + (idx + 0.5) * grid.h
    return np.concatenate([D.john_center[None, :], pts, np.asarray(x, float)[None, :]])


@dataclass
class BallChain:
    centers: np.ndarray
    radii: np.ndarray
    terminal: np.ndarray
    K: float = 0.0
    N: int = 0
    M: float = 0.0
    realization: str = "widest-path"

    def __len__(self):
        return len(self.radii)

    def to_dict(self) -> dict:
        return {"terminal": self.terminal.tolist(), "balls": len(self),
                "centers": self.centers.tolist(), "radii": self.radii.tolist(),
                "K": self.K, "N": self.N, "M": self.M, "realization": self.realization}


class _Polyline:
    def __init__(self, pts):
        self.pts = pts
        seg = np.sqrt((np.diff(pts, axis=0) ** 2).sum(1))
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])
        self.length = float(self.cum[-1])

    def at(self, t: float) -> np.ndarray:
        t = min(max(t, 0.0), self.length)
        j = int(np.searchsorted(self.cum, t, side="right")) - 1
        j = min(max(j, 0), len(self.pts) - 2)
        span = self.cum[j + 1] - self.cum[j]
        a = 0.0 if span == 0 else (t - self.cum[j]) / span
        return self.pts[j] + a * (self.pts[j + 1] - self.pts[j])


def lens_measure(r1: float, r2: float, d: float, n: int) -> float:
    """Measure of the intersection of two balls with centre distance ``d``."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return unit_ball_volume(n) * min(r1, r2) ** n
    if n == 2:
        a1 = r1 * r1 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
        a2 = r2 * r2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
        k = 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
        return a1 + a2 - k
    return (math.pi * (r1 + r2 - d) ** 2
            * (d * d + 2 * d * r2 - 3 * r2 * r2 + 2 * d * r1 + 6 * r1 * r2 - 3 * r1 * r1) / (12 * d))


def _ball_window(grid: Grid, c, r):
    a = np.floor((c - r - grid.lo_array) / grid.h).astype(int)
    b = np.ceil((c + r - grid.lo_array) / grid.h).astype(int)
    win = tuple(slice(max(0, i), min(grid.resolution, j + 1)) for i, j in zip(a, b))
    d2 = 0.0
    for ax, w in enumerate(win):
        x = grid.lo[ax] + (np.arange(w.start, w.stop) + 0.5) * grid.h - c[ax]
        shp = [1] * grid.dim
        shp[ax] = -1
        d2 = d2 + (x ** 2).reshape(shp)
    return win, np.broadcast_to(d2, tuple(w.stop - w.start for w in win))


def chain_constants(D: DomainModel, centers, radii, x) -> tuple[float, int, float]:
    """Smallest K, N, M for which items (2)-(4) of the chain properties hold."""
    x = np.asarray(x, float)
    if len(radii) == 0:
        return 0.0, 0, 0.0
    sx = float(D.s_field.values[D.grid.index_of(x)])
    gap = np.maximum(np.sqrt(((centers - x) ** 2).sum(1)) - radii, 0.0)
    K = float(np.max(gap ** sx / radii))
    count = np.zeros(D.grid.shape, dtype=np.int64)
    for c, r in zip(centers, radii):
        win, d2 = _ball_window(D.grid, c, r)
        count[win] += d2 < r * r
    N = int(count[D.mask].max()) if D.mask.any() else 0
    n = D.grid.dim
    w = unit_ball_volume(n)
    M = 0.0
    for i in range(len(radii) - 1):
        d = float(np.sqrt(((centers[i] - centers[i + 1]) ** 2).sum()))
        inter = lens_measure(radii[i], radii[i + 1], d, n)
        union = w * (radii[i] ** n + radii[i + 1] ** n) - inter
        M = max(M, union / inter if inter > 0 else math.inf)
    return K, N, M


def build_chain(D: DomainModel, x, through_base: bool = False) -> BallChain:
    """Chain of balls from ``B(x0, dist(x0)/2)`` towards ``x`` along the widest path.

    Centres follow the path; each radius is half the smaller of the
    clearance and the distance to ``x``.  Consecutive centres satisfy
    ``|x_i - x_{i+1}| <= min(r_i, r_{i+1}) / 2``.  The chain stops once the
    radius falls below h/2.  Points of the base ball get an empty chain
    unless ``through_base`` is set, in which case the same construction is
    run anyway (useful when the base ball fills the domain, as for a disk);
    the first ball then also takes its radius from the rule above.
    """
    x = np.asarray(x, dtype=float)
    x0, R0 = D.base_ball
    n = D.grid.dim
    if not D.contains(x[None, :])[0]:
        raise ValueError("terminal point is outside the domain")
    if not through_base and np.sqrt(((x - x0) ** 2).sum()) < R0:
        return BallChain(np.zeros((0, n)), np.zeros(0), x)
    path = _Polyline(john_path(D, x))
    h = D.grid.h

    def radius(p):
        return 0.5 * min(float(D.distance(p[None, :])[0]), float(np.sqrt(((p - x) ** 2).sum())))

    r0 = radius(x0) if through_base else 0.5 * R0
    centers, radii = [x0.copy()], [r0]
    t = 0.0
    while True:
        c, r = centers[-1], radii[-1]
        step = 0.4 * r
        for _ in range(60):
            p = path.at(t + step)
            rp = radius(p)
            if np.sqrt(((p - c) ** 2).sum()) <= 0.5 * min(r, rp):
                break
            step *= 0.5
        else:
            break
        if t + step >= path.length or rp < h / 2:
            break
        t += step
        centers.append(p)
        radii.append(rp)
    centers, radii = np.array(centers), np.array(radii)
    K, N, M = chain_constants(D, centers, radii, x)
    return BallChain(centers, radii, x, K, N, M)


def overlap_ceiling(n: int) -> int:
    """``24^n`` times the per-dimension stand-in for the Besicovitch constant."""
    return 24 ** n * BESICOVITCH_STANDIN ** n


def chain_check(chain: BallChain, D: DomainModel, x=None) -> Report:
    """Certify containment, the tail and the constants K, N, M of a chain."""
    x = chain.terminal if x is None else np.asarray(x, float)
    rep = Report("chain_check", inputs={"terminal": x.tolist(), "domain": D.kind})
    grid = D.grid
    bad = []
    for i, (c, r) in enumerate(zip(chain.centers, chain.radii)):
        win, d2 = _ball_window(grid, c, 2 * r)
        if np.any((d2 < 4 * r * r) & ~D.mask[win]):
            bad.append(i)
    rep.add_check("double_ball_inside", not bad, len(bad), 0, 0,
                  "every cell centre of B(x_i, 2 r_i) is masked")
    K, N, M = chain_constants(D, chain.centers, chain.radii, x)
    rep.add_check("K_finite", math.isfinite(K), K, None, None, "dist(x, B_i)^s(x) <= K r_i")
    rep.add_check("N_ceiling", N <= overlap_ceiling(grid.dim), N, overlap_ceiling(grid.dim), 0,
                  "overlap count of the balls")
    rep.add_check("M_finite", math.isfinite(M), M, None, None,
                  "|B_i u B_i+1| <= M |B_i n B_i+1|")
    if len(chain) > 1:
        near = np.sqrt(((chain.centers - x) ** 2).sum(1))
        governed = np.isclose(chain.radii, 0.5 * near, rtol=1e-9, atol=0.0)
        start = len(governed)
        while start > 0 and governed[start - 1]:
            start -= 1
        tail = chain.radii[start:]
        # the path may first move away from x; the tail starts at the peak
        tail = tail[int(np.argmax(tail)):] if len(tail) else tail
        monotone = bool(np.all(np.diff(tail) <= 1e-12 * tail[:-1])) if len(tail) > 1 else True
        rep.add_check("radii_tail_decreasing", monotone and chain.radii[-1] < 2 * grid.h,
                      float(chain.radii[-1]), 2 * grid.h, 0,
                      "radii set by |x_i - x| decrease to resolution scale")
        d = np.sqrt((np.diff(chain.centers, axis=0) ** 2).sum(1))
        link = np.max(d / (0.5 * np.minimum(chain.radii[:-1], chain.radii[1:])))
        rep.add_check("consecutive_overlap", link <= 1 + 1e-9, float(link), 1.0, 1e-9,
                      "|x_i - x_i+1| <= min(r_i, r_i+1) / 2")
    rep.constants.update({"K": K, "N": N, "M": M, "balls": len(chain),
                          "realization": chain.realization})
    return rep


def pointwise_chain_bound(u: ScalarField, D: DomainModel, eval_set: EvalSet | None = None,
                          grad: ScalarField | None = None) -> PointwiseComparison:
    """Compare ``|u - u_B|`` with the s(.)-potential of ``|grad u|``."""
    if not np.array_equal(u.mask, D.mask):
        raise ValueError("u must be defined on the domain mask")
    if eval_set is None:
        eval_set = EvalSet.stratified(D.grid, D.mask)
    x0, R0 = D.base_ball
    uB = mean_over_ball(u, x0, R0)
    g = gradient_magnitude(u) if grad is None else grad
    left = np.abs(u.values[tuple(eval_set.indices.T)] - uB)
    right = riesz_tilde(g, D.s_field, eval_set)
    return PointwiseComparison(eval_set.points, left, right, label="chain_bound",
                               extra={"u_B": uB})
