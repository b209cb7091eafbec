"""Uniform cell-centred grids, sampled fields and exponent fields.

Every quantity in the package lives on a :class:`Grid`: a cube in R^n
(n = 2 or 3) split into ``resolution**n`` equal cells.  A
:class:`ScalarField` carries one value per cell plus a boolean mask that
marks the cells belonging to the domain; all integrals use the midpoint
rule ``h**n * sum(values[mask])``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

EXACT_PAIR_LIMIT = 2 ** 12
NEAR_PAIR_RADIUS = 8          # in cells, for the sampled log-Hoelder estimate
FAR_PAIR_SAMPLES = 2 ** 16


@dataclass(frozen=True)
class Grid:
    """Cube ``[lo, lo + side]^dim`` with ``resolution`` cells per axis."""

    dim: int
    resolution: int
    lo: tuple[float, ...]
    side: float

    @property
    def h(self) -> float:
        return self.side / self.resolution

    @property
    def hi(self) -> tuple[float, ...]:
        return tuple(a + self.side for a in self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.asarray(self.lo, dtype=float)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.resolution,) * self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def size(self) -> int:
        return self.resolution ** self.dim

    @property
    def diameter(self) -> float:
        return self.side * math.sqrt(self.dim)

    @cached_property
    def axes(self) -> tuple[np.ndarray, ...]:
        k = np.arange(self.resolution) + 0.5
        return tuple(a + k * self.h for a in self.lo)

    @cached_property
    def centers(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays of all cell centres, ``indexing='ij'``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def center_of(self, index) -> np.ndarray:
        index = np.asarray(index)
        return np.asarray(self.lo) + (index + 0.5) * self.h

    def index_of(self, point) -> tuple[int, ...]:
        """Index of the cell containing ``point`` (clipped to the grid)."""
        p = np.asarray(point, dtype=float)
        k = np.floor((p - np.asarray(self.lo)) / self.h).astype(int)
        k = np.clip(k, 0, self.resolution - 1)
        return tuple(int(v) for v in k)

    def snap_to_corner(self, point) -> np.ndarray:
        """Nearest cell corner; used for analytic singularities."""
        p = np.asarray(point, dtype=float)
        lo = np.asarray(self.lo)
        return lo + np.round((p - lo) / self.h) * self.h

    def to_json(self) -> dict:
        return {"dim": self.dim, "resolution": self.resolution,
                "bbox": [[a, a + self.side] for a in self.lo]}


def make_grid(dim: int, resolution: int, bbox) -> Grid:
    """Build a :class:`Grid`.

    ``bbox`` is either one ``(lo, hi)`` pair used for every axis or a
    sequence of ``dim`` such pairs.  All sides must be equal, since the
    grid has a single spacing ``h``.
    """
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    if int(resolution) != resolution or resolution < 4:
        raise ValueError(f"resolution must be an integer >= 4, got {resolution}")
    arr = np.asarray(bbox, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2):
        raise ValueError(f"bbox must be (lo, hi) or {dim} such pairs")
    sides = arr[:, 1] - arr[:, 0]
    if not np.all(np.isfinite(arr)) or np.any(sides <= 0):
        raise ValueError("degenerate bounding box")
    if not np.allclose(sides, sides[0], rtol=1e-12, atol=0):
        raise ValueError("bounding box must be a cube (one spacing for all axes)")
    return Grid(dim, int(resolution), tuple(float(a) for a in arr[:, 0]), float(sides[0]))


def _as_mask(grid: Grid, mask) -> np.ndarray:
    if mask is None:
        return np.ones(grid.shape, dtype=bool)
    if hasattr(mask, "mask"):
        mask = mask.mask
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError(f"mask shape {mask.shape} does not match grid {grid.shape}")
    return mask


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Cell values on a grid, restricted to a mask."""

    grid: Grid
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = _as_mask(self.grid, self.mask)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("field values must be finite on masked cells")
        values = np.where(mask, values, 0.0) if not np.all(np.isfinite(values)) else values
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def masked(self) -> np.ndarray:
        return self.values[self.mask]

    @property
    def measure(self) -> float:
        """Lebesgue measure of the masked region."""
        return self.grid.cell_volume * int(np.count_nonzero(self.mask))

    def integral(self) -> float:
        return self.grid.cell_volume * float(np.sum(self.masked))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values, self.mask)

    def with_mask(self, mask) -> "ScalarField":
        return ScalarField(self.grid, self.values, mask)

    def scaled(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, np.where(self.mask, c * self.values, 0.0), self.mask)

    def abs(self) -> "ScalarField":
        return ScalarField(self.grid, np.abs(self.values), self.mask)

    def is_zero(self) -> bool:
        return not np.any(self.masked)

    def compatible(self, other: "ScalarField") -> bool:
        return self.grid == other.grid and np.array_equal(self.mask, other.mask)


def integrate(f: ScalarField) -> float:
    return f.integral()


class LogHolderEstimate(NamedTuple):
    value: float
    exact: bool
    pairs: int

    def __float__(self):
        return float(self.value)


def _masked_coords(g: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    idx = np.argwhere(g.mask)
    return idx, g.values[g.mask]


def log_holder_constant(g: ScalarField) -> LogHolderEstimate:
    """Discrete log-Hoelder constant ``max |g(x)-g(y)| log(e + 1/|x-y|)``.

    Exact pair enumeration up to ``EXACT_PAIR_LIMIT`` masked cells.  Above
    that, all pairs closer than ``NEAR_PAIR_RADIUS`` cells are scanned plus
    ``FAR_PAIR_SAMPLES`` seeded random pairs; the result is then a lower
    bound and ``exact`` is False.
    """
    idx, vals = _masked_coords(g)
    m = len(vals)
    if m == 0:
        raise ValueError("log_holder_constant: empty mask")
    h = g.grid.h
    if m == 1:
        return LogHolderEstimate(0.0, True, 0)
    if m <= EXACT_PAIR_LIMIT:
        pts = idx * h
        best = 0.0
        step = 512
        for s in range(0, m, step):
            d = np.sqrt(((pts[s:s + step, None, :] - pts[None, :, :]) ** 2).sum(-1))
            dv = np.abs(vals[s:s + step, None] - vals[None, :])
            with np.errstate(divide="ignore", invalid="ignore"):
                w = np.log(math.e + 1.0 / d)
                prod = np.where(d > 0, dv * w, 0.0)
            best = max(best, float(prod.max()))
        return LogHolderEstimate(best, True, m * (m - 1) // 2)

    best = 0.0
    pairs = 0
    vals_full = g.values
    mask = g.mask
    n = g.dim
    R = NEAR_PAIR_RADIUS
    for off in np.ndindex(*(2 * R + 1,) * n):
        o = np.array(off) - R
        # half of the offsets suffices by symmetry
        nz = o[o != 0]
        if len(nz) == 0 or nz[0] < 0 or float(o @ o) > R * R:
            continue
        a_sl, b_sl = [], []
        for k in o:
            k = int(k)
            a_sl.append(slice(max(0, -k), g.grid.resolution - max(0, k)))
            b_sl.append(slice(max(0, k), g.grid.resolution - max(0, -k)))
        a_sl, b_sl = tuple(a_sl), tuple(b_sl)
        both = mask[a_sl] & mask[b_sl]
        if not both.any():
            continue
        dv = np.abs(vals_full[a_sl] - vals_full[b_sl])[both]
        w = math.log(math.e + 1.0 / (h * math.sqrt(float(o @ o))))
        best = max(best, float(dv.max()) * w)
        pairs += int(both.sum())
    gen = np.random.default_rng(0)
    i = gen.integers(0, m, FAR_PAIR_SAMPLES)
    j = gen.integers(0, m, FAR_PAIR_SAMPLES)
    d = h * np.sqrt(((idx[i] - idx[j]) ** 2).sum(-1))
    keep = d > 0
    if keep.any():
        prod = np.abs(vals[i] - vals[j])[keep] * np.log(math.e + 1.0 / d[keep])
        best = max(best, float(prod.max()))
        pairs += int(keep.sum())
    return LogHolderEstimate(best, False, pairs)


def _extend_nearest(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    if mask.all():
        return values
    idx = ndimage.distance_transform_edt(~mask, return_distances=False, return_indices=True)
    return values[tuple(idx)]


class ExponentField:
    """A scalar field used as a variable exponent or order.

    Values off the mask are replaced by the value at the nearest masked
    cell, so the field is defined on the whole box (the content estimator
    evaluates exponents at ball centres that may sit outside the domain).
    ``lo``/``hi`` are the min/max over masked cells.
    """

    def __init__(self, base: ScalarField):
        if not base.mask.any():
            raise ValueError("exponent field needs a nonempty mask")
        ext = _extend_nearest(np.asarray(base.values), base.mask)
        self.base = ScalarField(base.grid, ext, base.mask)
        m = self.base.masked
        self.lo = float(m.min())
        self.hi = float(m.max())

    @classmethod
    def constant(cls, grid: Grid, value: float, mask=None) -> "ExponentField":
        return cls(ScalarField(grid, np.full(grid.shape, float(value)), _as_mask(grid, mask)))

    @classmethod
    def from_values(cls, grid: Grid, values, mask=None) -> "ExponentField":
        return cls(ScalarField(grid, values, _as_mask(grid, mask)))

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def values(self) -> np.ndarray:
        return self.base.values

    @property
    def mask(self) -> np.ndarray:
        return self.base.mask

    @cached_property
    def logholder(self) -> LogHolderEstimate:
        return log_holder_constant(self.base)

    @property
    def logholder_c(self) -> float:
        return self.logholder.value

    @property
    def is_constant(self) -> bool:
        return self.lo == self.hi

    def map(self, fn) -> "ExponentField":
        """Apply ``fn`` cellwise and wrap the result as a new exponent field."""
        return ExponentField(ScalarField(self.grid, fn(np.asarray(self.values)), self.mask))

    def restrict(self, mask) -> "ExponentField":
        return ExponentField(ScalarField(self.grid, self.values, mask))

    def __repr__(self):
        return f"ExponentField(lo={self.lo:.6g}, hi={self.hi:.6g}, grid={self.grid.shape})"


def gradient_magnitude(u: ScalarField) -> ScalarField:
    """Euclidean norm of the discrete gradient.

    Central differences where both axis neighbours are masked, one-sided
    differences where only one is.  A masked cell without any masked
    neighbour is an error.
    """
    mask = u.mask
    vals = np.asarray(u.values)
    h = u.grid.h
    sq = np.zeros(u.grid.shape)
    has_nb = np.zeros(u.grid.shape, dtype=bool)
    for ax in range(u.dim):
        pm = np.pad(mask, [(1, 1) if a == ax else (0, 0) for a in range(u.dim)])
        pv = np.pad(vals, [(1, 1) if a == ax else (0, 0) for a in range(u.dim)])
        fwd_m = np.take(pm, np.arange(2, pm.shape[ax]), axis=ax)
        bwd_m = np.take(pm, np.arange(0, pm.shape[ax] - 2), axis=ax)
        fwd_v = np.take(pv, np.arange(2, pv.shape[ax]), axis=ax)
        bwd_v = np.take(pv, np.arange(0, pv.shape[ax] - 2), axis=ax)
        d = np.zeros(u.grid.shape)
        both = fwd_m & bwd_m
        only_f = fwd_m & ~bwd_m
        only_b = bwd_m & ~fwd_m
        d[both] = (fwd_v[both] - bwd_v[both]) / (2 * h)
        d[only_f] = (fwd_v[only_f] - vals[only_f]) / h
        d[only_b] = (vals[only_b] - bwd_v[only_b]) / h
        sq += d * d
        has_nb |= fwd_m | bwd_m
    isolated = mask & ~has_nb
    if isolated.any():
        bad = tuple(int(i) for i in np.argwhere(isolated)[0])
        raise ValueError(f"gradient_magnitude: isolated masked cell at index {bad}")
    return ScalarField(u.grid, np.where(mask, np.sqrt(sq), 0.0), mask)


def ball_cells(grid: Grid, center, radius: float) -> tuple[tuple[slice, ...], np.ndarray]:
    """Index window and boolean selector of cells whose centre is in B(center, radius)."""
    c = np.asarray(center, dtype=float)
    lo = np.asarray(grid.lo)
    k0 = np.clip(np.floor((c - radius - lo) / grid.h - 0.5).astype(int), 0, grid.resolution)
    k1 = np.clip(np.ceil((c + radius - lo) / grid.h + 0.5).astype(int), 0, grid.resolution)
    window = tuple(slice(int(a), int(b)) for a, b in zip(k0, k1))
    d2 = sum(((grid.axes[a][window[a]] - c[a]) ** 2).reshape(
        [-1 if b == a else 1 for b in range(grid.dim)]) for a in range(grid.dim))
    return window, d2 < radius * radius


def mean_over_ball(u: ScalarField, center, radius: float) -> float:
    """Mean of ``u`` over masked cells whose centre lies in the open ball."""
    window, inside = ball_cells(u.grid, center, radius)
    sel = inside & u.mask[window]
    count = int(np.count_nonzero(sel))
    if count == 0:
        raise ValueError("mean_over_ball: ball does not meet the mask")
    return float(np.sum(u.values[window][sel]) / count)


# ---------------------------------------------------------------- sampling

def _random_smooth(grid: Grid, seed: int, kmax: int, amplitude: float) -> np.ndarray:
    gen = np.random.default_rng(seed)
    ks = [k for k in np.ndindex(*(2 * kmax + 1,) * grid.dim)]
    ks = np.array(ks) - kmax
    ks = ks[np.any(ks != 0, axis=1)]
    coef = gen.standard_normal(len(ks)) / (1.0 + (ks ** 2).sum(1))
    phase = gen.uniform(0, 2 * np.pi, len(ks))
    rel = [np.asarray(c) - a for c, a in zip(grid.centers, grid.lo)]
    out = np.zeros(grid.shape)
    scale = 2 * np.pi / grid.side
    for k, a, ph in zip(ks, coef, phase):
        arg = ph + scale * sum(int(k[d]) * rel[d] for d in range(grid.dim) if k[d])
        out += a * np.cos(arg)
    peak = np.abs(out).max()
    return amplitude * out / peak if peak > 0 else out


def sample_field(grid: Grid, fn: str, mask=None, **params) -> ScalarField:
    """Sample a named analytic function at the cell centres.

    Known names and parameters:

    ``constant``        value
    ``ball_indicator``  center, radius, value=1
    ``gaussian``        center, width, amplitude=1
    ``radial_power``    center, gamma (centre snapped to a cell corner)
    ``linear``          coeffs, offset=0
    ``random_smooth``   seed, kmax=4, amplitude=1, offset=0 (band-limited noise)
    """
    m = _as_mask(grid, mask)
    X = grid.centers
    n = grid.dim

    def point(name):
        p = np.asarray(params.get(name, np.zeros(n)), dtype=float)
        if p.shape != (n,):
            raise ValueError(f"{fn}: {name} must have {n} coordinates")
        return p

    if fn == "constant":
        vals = np.full(grid.shape, float(params.get("value", 0.0)))
    elif fn == "ball_indicator":
        c, r = point("center"), float(params["radius"])
        if r <= 0:
            raise ValueError("ball_indicator: radius must be positive")
        d2 = sum((X[a] - c[a]) ** 2 for a in range(n))
        vals = np.where(d2 < r * r, float(params.get("value", 1.0)), 0.0)
    elif fn == "gaussian":
        c, w = point("center"), float(params["width"])
        if w <= 0:
            raise ValueError("gaussian: width must be positive")
        d2 = sum((X[a] - c[a]) ** 2 for a in range(n))
        vals = float(params.get("amplitude", 1.0)) * np.exp(-d2 / (w * w))
    elif fn == "radial_power":
        c = grid.snap_to_corner(point("center"))
        gamma = float(params["gamma"])
        if gamma <= -n:
            raise ValueError("radial_power: gamma must exceed -dim for local integrability")
        r = np.sqrt(sum((X[a] - c[a]) ** 2 for a in range(n)))
        vals = r ** gamma
    elif fn == "linear":
        coeffs = np.asarray(params["coeffs"], dtype=float)
        if coeffs.shape != (n,):
            raise ValueError(f"linear: coeffs must have {n} entries")
        vals = float(params.get("offset", 0.0)) + sum(coeffs[a] * X[a] for a in range(n))
    elif fn == "random_smooth":
        kmax = int(params.get("kmax", 4))
        if kmax < 1:
            raise ValueError("random_smooth: kmax must be >= 1")
        vals = float(params.get("offset", 0.0)) + _random_smooth(
            grid, int(params.get("seed", 0)), kmax, float(params.get("amplitude", 1.0)))
    else:
        raise ValueError(f"unknown field function {fn!r}")
    return ScalarField(grid, np.where(m, vals, 0.0), m)


# ----------------------------------------------------------------- file io

def save_field(f: ScalarField, path, binary: bool = False, field_kind: str = "scalar") -> Path:
    """Write ``<path>.json`` plus value/mask files (CSV or little-endian f8/u1)."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix == ".json" else path
    header = f.grid.to_json()
    header["field_kind"] = field_kind
    header["encoding"] = "binary" if binary else "csv"
    rows = f.values.reshape(-1, f.grid.resolution)
    mrows = f.mask.reshape(-1, f.grid.resolution).astype(np.uint8)
    if binary:
        vname, mname = stem.name + ".values.bin", stem.name + ".mask.bin"
        np.ascontiguousarray(f.values, dtype="<f8").tofile(stem.parent / vname)
        np.ascontiguousarray(f.mask, dtype="u1").tofile(stem.parent / mname)
    else:
        vname, mname = stem.name + ".values.csv", stem.name + ".mask.csv"
        np.savetxt(stem.parent / vname, rows, delimiter=",", fmt="%.17g")
        np.savetxt(stem.parent / mname, mrows, delimiter=",", fmt="%d")
    header["values"], header["mask"] = vname, mname
    out = stem.parent / (stem.name + ".json")
    out.write_text(json.dumps(header, indent=2))
    return out


def load_field(path) -> tuple[ScalarField, dict]:
    path = Path(path)
    header = json.loads(path.read_text())
    bbox = header["bbox"]
    grid = make_grid(header["dim"], header["resolution"], bbox)
    vpath, mpath = path.parent / header["values"], path.parent / header["mask"]
    if header.get("encoding") == "binary":
        vals = np.fromfile(vpath, dtype="<f8").reshape(grid.shape)
        mask = np.fromfile(mpath, dtype="u1").reshape(grid.shape).astype(bool)
    else:
        vals = np.loadtxt(vpath, delimiter=",", ndmin=2).reshape(grid.shape)
        mask = np.loadtxt(mpath, delimiter=",", ndmin=2).reshape(grid.shape).astype(bool)
    return ScalarField(grid, vals, mask), header
