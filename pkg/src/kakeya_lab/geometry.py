"""Directions, projections, delta-tubes and (delta, e)-rectangles in the plane.

Conventions
-----------
A direction is stored as an angle in [0, pi); ``e = (cos a, sin a)`` and the
tube axis is ``e_perp = (-sin a, cos a)``.  Tube ``j`` at scale ``delta`` is the
half-open slab ``j*delta <= x.e < (j+1)*delta``.  A rectangle in tube ``j`` with
offset ``o`` is the closed set ``{x : j*delta <= x.e <= (j+1)*delta,
o <= x.e_perp <= o + 1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Point = tuple[float, float]


@dataclass(frozen=True, eq=False)
class Direction:
    """Angle in [0, pi); equality is up to 1e-12 in chord distance."""

    angle: float

    def __post_init__(self) -> None:
        a = math.fmod(float(self.angle), math.pi)
        if a < 0:
            a += math.pi
        if a >= math.pi:
            a = 0.0
        object.__setattr__(self, "angle", a)

    @property
    def e(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])

    @property
    def perp(self) -> np.ndarray:
        return np.array([-math.sin(self.angle), math.cos(self.angle)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Direction):
            return NotImplemented
        return angle_chord(self.angle - other.angle) <= 1e-12

    def __hash__(self) -> int:
        # tolerance equality admits no finer hash that stays consistent with it
        return hash(Direction)

    def distance(self, other: "Direction") -> float:
        """Chord distance |e - xi|, minimised over the sign of xi."""
        return angle_chord(self.angle - other.angle)


def angle_chord(diff):
    """Chord length between unit vectors whose angles differ by ``diff`` (mod pi)."""
    d = np.mod(np.abs(diff), np.pi)
    d = np.minimum(d, np.pi - d)
    out = 2.0 * np.sin(d / 2.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class TubeId:
    direction: Direction
    delta: float
    j: int

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def lower(self) -> float:
        return self.j * self.delta

    @property
    def upper(self) -> float:
        return (self.j + 1) * self.delta


@dataclass(frozen=True)
class RectSpec:
    tube: TubeId
    offset: float

    @property
    def direction(self) -> Direction:
        return self.tube.direction

    @property
    def delta(self) -> float:
        return self.tube.delta

    def vertices(self) -> list[Point]:
        """Counter-clockwise corners."""
        e = self.direction.e
        p = self.direction.perp
        s0, s1 = self.tube.lower, self.tube.upper
        t0, t1 = self.offset, self.offset + 1.0
        return [
            tuple(s * e + t * p)
            for s, t in ((s0, t0), (s1, t0), (s1, t1), (s0, t1))
        ]

    def halfplanes(self) -> list[tuple[np.ndarray, float]]:
        """Inequalities ``n.x <= c`` whose intersection is the rectangle."""
        e = self.direction.e
        p = self.direction.perp
        return [
            (-e, -self.tube.lower),
            (e, self.tube.upper),
            (-p, -self.offset),
            (p, self.offset + 1.0),
        ]


def project(e: Direction, x: Sequence[float]) -> float:
    v = e.e
    return float(v[0] * x[0] + v[1] * x[1])


def tube_of(e: Direction, delta: float, x: Sequence[float]) -> TubeId:
    if not delta > 0:
        raise ValueError("delta must be positive")
    return TubeId(e, delta, math.floor(project(e, x) / delta))


def clip_halfplane(poly: list[Point], n: np.ndarray, c: float) -> list[Point]:
    """Sutherland-Hodgman step: keep the part of ``poly`` with ``n.x <= c``."""
    if not poly:
        return []
    out: list[Point] = []
    nx, ny = float(n[0]), float(n[1])
    prev = poly[-1]
    fprev = nx * prev[0] + ny * prev[1] - c
    for cur in poly:
        fcur = nx * cur[0] + ny * cur[1] - c
        if fcur <= 0:
            if fprev > 0:
                w = fprev / (fprev - fcur)
                out.append((prev[0] + w * (cur[0] - prev[0]), prev[1] + w * (cur[1] - prev[1])))
            out.append(cur)
        elif fprev <= 0:
            w = fprev / (fprev - fcur)
            out.append((prev[0] + w * (cur[0] - prev[0]), prev[1] + w * (cur[1] - prev[1])))
        prev, fprev = cur, fcur
    return out


def polygon_area(poly: Sequence[Point]) -> float:
    if len(poly) < 3:
        return 0.0
    acc = 0.0
    for (x0, y0), (x1, y1) in zip(poly, list(poly[1:]) + [poly[0]]):
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


def rect_intersection_polygon(r1: RectSpec, r2: RectSpec) -> list[Point]:
    poly = r1.vertices()
    for n, c in r2.halfplanes():
        poly = clip_halfplane(poly, n, c)
        if not poly:
            break
    return poly


def rect_intersection_area(r1: RectSpec, r2: RectSpec) -> float:
    area = polygon_area(rect_intersection_polygon(r1, r2))
    return min(area, r1.delta, r2.delta)


def projection_interval(e: Direction, rect: RectSpec) -> tuple[float, float]:
    vals = [project(e, v) for v in rect.vertices()]
    return min(vals), max(vals)


def intersection_bound(delta: float, gap: float) -> float:
    """delta^2 / (|e - xi| + delta), the scale of two crossing rectangles' overlap."""
    return delta * delta / (gap + delta)


@dataclass(frozen=True)
class GridSpec:
    """Square cell grid; arrays are indexed ``[iy, ix]`` with y increasing in iy."""

    origin: tuple[float, float]
    side: float
    cells_per_side: int

    def __post_init__(self) -> None:
        if self.cells_per_side < 1 or not self.side > 0:
            raise ValueError("grid needs positive side and cell count")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @classmethod
    def covering(cls, lo: Point, hi: Point, h: float) -> "GridSpec":
        """Smallest grid with cell size ``h`` whose origin sits on the h-lattice and covers [lo, hi]."""
        x0 = math.floor(lo[0] / h - 1e-9) * h
        y0 = math.floor(lo[1] / h - 1e-9) * h
        span = max(hi[0] - x0, hi[1] - y0)
        n = int(math.ceil(span / h - 1e-9))
        return cls((x0, y0), n * h, n)

    @property
    def h(self) -> float:
        return self.side / self.cells_per_side

    @property
    def shape(self) -> tuple[int, int]:
        return (self.cells_per_side, self.cells_per_side)

    @property
    def extent(self) -> tuple[float, float, float, float]:
        x0, y0 = self.origin
        return x0, y0, x0 + self.side, y0 + self.side

    def node_coords(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.cells_per_side
        x0, y0 = self.origin
        return x0 + self.h * np.arange(n + 1), y0 + self.h * np.arange(n + 1)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two (n, n) arrays."""
        n = self.cells_per_side
        x0, y0 = self.origin
        c = (np.arange(n) + 0.5) * self.h
        return np.meshgrid(x0 + c, y0 + c)

    def contains(self, pts: np.ndarray) -> np.ndarray:
        x0, y0, x1, y1 = self.extent
        pts = np.asarray(pts)
        eps = 1e-12
        return (
            (pts[..., 0] >= x0 - eps) & (pts[..., 0] <= x1 + eps)
            & (pts[..., 1] >= y0 - eps) & (pts[..., 1] <= y1 + eps)
        )


def _edge_integral(ua, va, ub, vb, xs, ys):
    """Oriented integral of 1{u <= x} * min(v(u), y) du along one polygon edge.

    ``xs`` has shape (nx, 1) and ``ys`` shape (1, ny).
    """
    if ua == ub:
        return np.zeros((xs.shape[0], ys.shape[1]))
    sign = 1.0 if ub > ua else -1.0
    lo, hi = min(ua, ub), max(ua, ub)
    slope = (vb - va) / (ub - ua)
    upper = np.clip(xs, lo, hi)
    length = upper - lo
    p = va + slope * (lo - ua)
    q = va + slope * (upper - ua)
    whole = length * (p + q) / 2.0
    a = p - ys
    b = q - ys
    with np.errstate(divide="ignore", invalid="ignore"):
        mixed_a = a * a / (2.0 * (a - b))
        mixed_b = b * b / (2.0 * (b - a))
    excess = np.where(
        (a >= 0) & (b >= 0),
        (a + b) / 2.0,
        np.where(a > 0, mixed_a, np.where(b > 0, mixed_b, 0.0)),
    )
    return sign * (whole - length * excess)


def ring_area_grid(ring: Sequence[Point], grid: GridSpec, out: np.ndarray | None = None) -> np.ndarray:
    """Signed area of ``ring`` inside every grid cell (positive for CCW rings).

    Uses Green's theorem on the lower-left quadrant integral of each edge, so the
    result is exact up to rounding.  Work is restricted to the columns each edge
    spans.
    """
    n = grid.cells_per_side
    h = grid.h
    x0, y0 = grid.origin
    area = np.zeros(grid.shape) if out is None else out
    pts = [tuple(map(float, p)) for p in ring]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    for k in range(len(pts)):
        ua, va = pts[k]
        ub, vb = pts[(k + 1) % len(pts)]
        if ua == ub:
            continue
        lo, hi = min(ua, ub), max(ua, ub)
        c0 = max(int(math.floor((lo - x0) / h)), 0)
        c1 = min(int(math.ceil((hi - x0) / h)), n)
        if c1 <= c0:
            continue
        r1 = min(int(math.ceil((max(va, vb) - y0) / h)), n)
        if r1 < 1:
            # the edge lies wholly below the grid: contributes nothing inside it
            continue
        xs = (x0 + h * np.arange(c0, c1 + 1))[:, None]
        ys = (y0 + h * np.arange(0, r1 + 1))[None, :]
        g = _edge_integral(ua, va, ub, vb, xs, ys)
        cell = g[1:, 1:] - g[:-1, 1:] - g[1:, :-1] + g[:-1, :-1]
        area[0:r1, c0:c1] -= cell.T
    return area


def polygon_coverage(polygons: Sequence[Sequence[Point]], grid: GridSpec) -> np.ndarray:
    """Coverage fractions of the union of disjoint CCW polygons."""
    area = np.zeros(grid.shape)
    for poly in polygons:
        ring_area_grid(poly, grid, out=area)
    return clean_coverage(area / grid.h**2)


# cancellation noise of the column sums in ring_area_grid stays far below this
COVERAGE_FLOOR = 1e-9


def clean_coverage(cov: np.ndarray) -> np.ndarray:
    cov = np.clip(cov, 0.0, 1.0)
    cov[cov < COVERAGE_FLOOR] = 0.0
    return cov


def rasterize_rect(rect: RectSpec, grid: GridSpec) -> np.ndarray:
    if grid.h > rect.delta / 4 + 1e-15:
        raise ValueError(
            f"grid cell {grid.h:g} too coarse for delta={rect.delta:g}; need h <= delta/4"
        )
    return polygon_coverage([rect.vertices()], grid)


def trapezoid_cdf(x, a, b):
    """CDF of U1 + U2, U1 ~ U[-a, a], U2 ~ U[-b, b] (a, b >= 0), evaluated at x.

    Gives the fraction of a square cell lying below a level line of a linear
    function, which is how slab fractions of rotated cells are computed.
    """
    x = np.asarray(x, dtype=float)
    a, b = np.maximum(a, b), np.minimum(a, b)
    a = np.broadcast_to(a, x.shape)
    b = np.broadcast_to(b, x.shape)
    out = np.empty_like(x)
    tiny = b < 1e-15
    # degenerate: uniform on [-a, a]
    with np.errstate(divide="ignore", invalid="ignore"):
        uni = np.clip((x + a) / (2 * a), 0.0, 1.0)
        y = x + a + b  # shift support to [0, 2a + 2b]
        lower = y * y / (8 * a * b)
        middle = (y - b) / (2 * a)
        z = 2 * (a + b) - y
        upper = 1.0 - z * z / (8 * a * b)
    gen = np.where(
        y <= 0, 0.0,
        np.where(y <= 2 * b, lower,
                 np.where(y <= 2 * a, middle,
                          np.where(y < 2 * (a + b), upper, 1.0))),
    )
    out[...] = np.where(tiny, uni, gen)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class RasterSet:
    """Coverage fractions in [0, 1] on a grid; area is ``h**2 * sum(coverage)``."""

    grid: GridSpec
    coverage: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        cov = np.asarray(self.coverage, dtype=float)
        if cov.shape != self.grid.shape:
            raise ValueError(f"coverage shape {cov.shape} does not match grid {self.grid.shape}")
        if cov.size and (cov.min() < 0 or cov.max() > 1):
            raise ValueError("coverage values must lie in [0, 1]")
        object.__setattr__(self, "coverage", cov)

    @classmethod
    def empty(cls, grid: GridSpec) -> "RasterSet":
        return cls(grid, np.zeros(grid.shape))

    @property
    def area(self) -> float:
        return float(self.coverage.sum()) * self.grid.h**2

    def support(self) -> np.ndarray:
        return self.coverage > 0

    def binary(self, threshold: float = 0.5) -> "RasterSet":
        return RasterSet(self.grid, (self.coverage >= threshold).astype(float))
