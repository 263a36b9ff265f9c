"""Generators for the planar test sets and their delta-neighbourhoods."""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import ndimage
from scipy.optimize import minimize_scalar
from shapely import affinity
from shapely.geometry import Polygon
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from .frostman import CompactGridSet1D
from .geometry import Direction, GridSpec, RasterSet, clean_coverage, ring_area_grid, trapezoid_cdf

CENTER = (0.5, 0.5)
MAX_DEPTH = 12


class FeatureSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Square:
    side: float = 1.0

    def bounds(self):
        return (0.0, 0.0), (self.side, self.side)

    def min_feature(self) -> float:
        return self.side / 8


@dataclass(frozen=True)
class Disc:
    radius: float = 0.5
    center: tuple[float, float] = CENTER

    def bounds(self):
        cx, cy = self.center
        return (cx - self.radius, cy - self.radius), (cx + self.radius, cy + self.radius)

    def min_feature(self) -> float:
        return self.radius / 8


@dataclass(frozen=True)
class CantorProduct:
    """C_k x [0, 1] placed around CENTER with its segments perpendicular to ``angle``.

    C_k is the depth-k stage of the Cantor set keeping two end pieces of
    relative length ``ratio``; its dimension is log 2 / log(1/ratio).
    """

    ratio: float
    depth: int
    angle: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.ratio < 0.5:
            raise ValueError("Cantor ratio must lie in (0, 1/2)")
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")

    @property
    def dimension(self) -> float:
        return math.log(2) / math.log(1 / self.ratio)

    def intervals(self) -> np.ndarray:
        """Stage intervals of C_k in [0, 1], sorted, shape (2**k, 2)."""
        r = self.ratio
        starts = np.zeros(1)
        for level in range(self.depth):
            step = (1 - r) * r**level
            starts = np.concatenate([starts, starts + step])
        starts.sort()
        return np.stack([starts, starts + r**self.depth], axis=1)

    def bounds(self):
        rad = math.sqrt(0.5)
        return (CENTER[0] - rad, CENTER[1] - rad), (CENTER[0] + rad, CENTER[1] + rad)

    def min_feature(self) -> float:
        if self.depth == 0:
            return 1 / 8
        return (1 - 2 * self.ratio) * self.ratio ** (self.depth - 1)

    def segment_projections(self) -> tuple[Direction, np.ndarray]:
        """Direction e and the intervals rho_e(L) covered by the unit segments."""
        e = Direction(self.angle)
        shift = float(np.dot(CENTER, e.e)) - 0.5
        return e, self.intervals() + shift


@dataclass(frozen=True)
class PerronTree:
    depth: int
    copies: int = 1

    def __post_init__(self) -> None:
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"depth must lie in [0, {MAX_DEPTH}]")
        if self.copies not in (1, 4):
            raise ValueError("copies must be 1 (45 degree sector) or 4 (all directions)")

    def geometry(self):
        return perron_geometry(self.depth, self.copies)

    def bounds(self):
        x0, y0, x1, y1 = self.geometry().bounds
        return (x0, y0), (x1, y1)

    def min_feature(self) -> float:
        return 2.0**-self.depth


@dataclass(frozen=True)
class UnionRotations:
    base: "SetRecipe"
    angles: tuple[float, ...]

    def __init__(self, base, angles):
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "angles", tuple(float(a) for a in angles))
        if not self.angles:
            raise ValueError("UnionRotations needs at least one angle")

    def components(self) -> list["SetRecipe"]:
        return [rotate_recipe(self.base, a) for a in self.angles]

    def bounds(self):
        los, his = zip(*(c.bounds() for c in self.components()))
        return (min(p[0] for p in los), min(p[1] for p in los)), (
            max(p[0] for p in his), max(p[1] for p in his))

    def min_feature(self) -> float:
        return self.base.min_feature()


@dataclass(frozen=True)
class Custom:
    path: str


@dataclass(frozen=True)
class _Rotated:
    """A polygonal recipe rotated by ``angle`` about CENTER."""

    base: Union[Square, PerronTree]
    angle: float

    def geometry(self):
        return affinity.rotate(recipe_geometry(self.base), self.angle, origin=CENTER, use_radians=True)

    def bounds(self):
        x0, y0, x1, y1 = self.geometry().bounds
        return (x0, y0), (x1, y1)

    def min_feature(self) -> float:
        return self.base.min_feature()


SetRecipe = Union[Square, Disc, CantorProduct, PerronTree, UnionRotations, Custom]


def rotate_recipe(recipe, angle: float):
    if isinstance(recipe, CantorProduct):
        return CantorProduct(recipe.ratio, recipe.depth, recipe.angle + angle)
    if isinstance(recipe, Disc):
        cx, cy = recipe.center[0] - CENTER[0], recipe.center[1] - CENTER[1]
        c, s = math.cos(angle), math.sin(angle)
        return Disc(recipe.radius, (CENTER[0] + c * cx - s * cy, CENTER[1] + s * cx + c * cy))
    if isinstance(recipe, (Square, PerronTree)):
        return _Rotated(recipe, angle)
    if isinstance(recipe, _Rotated):
        return _Rotated(recipe.base, recipe.angle + angle)
    raise TypeError(f"cannot rotate {type(recipe).__name__}")


def recipe_geometry(recipe):
    if isinstance(recipe, Square):
        return Polygon([(0, 0), (recipe.side, 0), (recipe.side, recipe.side), (0, recipe.side)])
    if isinstance(recipe, (PerronTree, _Rotated)):
        return recipe.geometry()
    raise TypeError(f"{type(recipe).__name__} has no polygon form")


def segment_families(recipe) -> list[tuple[Direction, np.ndarray]]:
    """Declared unit-segment families: (direction, projection intervals) pairs."""
    if isinstance(recipe, CantorProduct):
        return [recipe.segment_projections()]
    if isinstance(recipe, UnionRotations):
        out = []
        for comp in recipe.components():
            out.extend(segment_families(comp))
        return out
    return []


def projected_grid_set(intervals: np.ndarray, delta: float) -> CompactGridSet1D:
    return CompactGridSet1D.from_intervals(delta, [tuple(iv) for iv in intervals])


# --- Perron tree -----------------------------------------------------------

@lru_cache(maxsize=None)
def perron_alpha(depth: int) -> float:
    """Overlap ratio minimising the area of the depth-``depth`` tree.

    A coarse scan locates the basin and a bounded scalar search refines it.
    """
    if depth == 0:
        return 1.0

    def area(alpha: float) -> float:
        return unary_union([Polygon(t) for t in perron_triangles(depth, alpha)]).area

    scan = np.linspace(0.5, 0.98, 25)
    a0 = float(scan[int(np.argmin([area(a) for a in scan]))])
    res = minimize_scalar(area, bounds=(max(0.5, a0 - 0.02), min(0.999, a0 + 0.02)),
                          method="bounded", options={"xatol": 1e-5})
    return float(res.x)


def perron_triangles(depth: int, alpha: float | None = None) -> list[list[tuple[float, float]]]:
    """Schoenberg's bisect-and-overlap rearrangement of the triangle (0,0),(1,0),(0,1).

    The base is cut into 2**depth elementary triangles sharing the apex; at each
    stage neighbouring groups are slid together so that their main triangles
    overlap down to height ratio ``alpha``.
    """
    if alpha is None:
        alpha = perron_alpha(depth)
    n = 2**depth
    xs = np.arange(n + 1) / n
    shift = np.zeros(n)
    # each group: [first, last_exclusive, left, right] of its main triangle base
    groups = [[i, i + 1, xs[i], xs[i + 1]] for i in range(n)]
    for _ in range(depth):
        merged = []
        for g1, g2 in zip(groups[0::2], groups[1::2]):
            move = g1[3] - g2[2]
            width = (g1[3] - g1[2]) + (g2[3] - g2[2])
            move -= (1 - alpha) * width
            shift[g2[0]:g2[1]] += move
            merged.append([g1[0], g2[1], g1[2], g2[3] + move])
        groups = merged
    return [
        [(xs[i] + shift[i], 0.0), (xs[i + 1] + shift[i], 0.0), (shift[i], 1.0)]
        for i in range(n)
    ]


def perron_geometry(depth: int, copies: int = 1):
    tree = unary_union([Polygon(t) for t in perron_triangles(depth)])
    x0, y0, x1, y1 = tree.bounds
    tree = affinity.translate(tree, CENTER[0] - (x0 + x1) / 2, CENTER[1] - (y0 + y1) / 2)
    if copies == 1:
        return tree
    return unary_union([
        affinity.rotate(tree, k * math.pi / 4, origin=CENTER, use_radians=True) for k in range(4)
    ])


def _geometry_coverage(geom, grid: GridSpec) -> np.ndarray:
    polys = [geom] if isinstance(geom, Polygon) else list(getattr(geom, "geoms", []))
    area = np.zeros(grid.shape)
    for p in polys:
        if not isinstance(p, Polygon) or p.is_empty:
            continue
        p = orient(p, 1.0)
        ring_area_grid(list(p.exterior.coords), grid, out=area)
        for hole in p.interiors:
            ring_area_grid(list(hole.coords), grid, out=area)
    return clean_coverage(area / grid.h**2)


# --- rasterisation -----------------------------------------------------------

def _interval_fraction(pos: np.ndarray, half_a: float, half_b: float, intervals: np.ndarray) -> np.ndarray:
    """Fraction of each cell whose projected coordinate falls in the union of ``intervals``.

    ``pos`` holds the cell-centre projections; the projected cell is a
    trapezoid with half-widths ``half_a`` and ``half_b``.
    """
    reach = half_a + half_b
    ends = intervals.ravel()
    inside = (np.searchsorted(ends, pos, side="right") % 2 == 1).astype(float)
    near = np.searchsorted(ends, pos + reach, side="right") - np.searchsorted(ends, pos - reach, side="left") > 0
    if np.any(near):
        p = pos[near]
        lo_i = np.searchsorted(intervals[:, 1], p - reach, side="left")
        hi_i = np.searchsorted(intervals[:, 0], p + reach, side="right")
        frac = np.zeros(len(p))
        width = int((hi_i - lo_i).max()) if len(p) else 0
        for k in range(width):
            i = np.minimum(lo_i + k, len(intervals) - 1)
            use = lo_i + k < hi_i
            a = intervals[i, 0] - p
            b = intervals[i, 1] - p
            frac += np.where(use, trapezoid_cdf(b, half_a, half_b) - trapezoid_cdf(a, half_a, half_b), 0.0)
        inside[near] = np.clip(frac, 0.0, 1.0)
    return inside


def _cantor_coverage(recipe: CantorProduct, grid: GridSpec) -> np.ndarray:
    """Coverage as the product of the across- and along-segment fractions.

    Exact for cells lying fully within the segments' length; the product
    approximation only touches cells at the two segment ends.
    """
    X, Y = grid.centers()
    e = Direction(recipe.angle)
    ca, sa = e.e
    across = (X - CENTER[0]) * ca + (Y - CENTER[1]) * sa + 0.5
    along = -(X - CENTER[0]) * sa + (Y - CENTER[1]) * ca + 0.5
    ha, hb = grid.h * abs(ca) / 2, grid.h * abs(sa) / 2
    f_across = _interval_fraction(across.ravel(), ha, hb, recipe.intervals())
    f_along = _interval_fraction(along.ravel(), ha, hb, np.array([[0.0, 1.0]]))
    return (f_across * f_along).reshape(grid.shape)


def _disc_coverage(recipe: Disc, grid: GridSpec, sub: int = 16) -> np.ndarray:
    X, Y = grid.centers()
    r = np.hypot(X - recipe.center[0], Y - recipe.center[1])
    h = grid.h
    cov = (r <= recipe.radius).astype(float)
    edge = np.abs(r - recipe.radius) <= h * math.sqrt(0.5)
    offs = (np.arange(sub) + 0.5) / sub - 0.5
    ox, oy = np.meshgrid(offs * h, offs * h)
    px = X[edge][:, None] + ox.ravel()[None, :]
    py = Y[edge][:, None] + oy.ravel()[None, :]
    cov[edge] = np.mean(np.hypot(px - recipe.center[0], py - recipe.center[1]) <= recipe.radius, axis=1)
    return cov


def _coverage(recipe, grid: GridSpec) -> np.ndarray:
    if isinstance(recipe, CantorProduct):
        return _cantor_coverage(recipe, grid)
    if isinstance(recipe, Disc):
        return _disc_coverage(recipe, grid)
    if isinstance(recipe, (Square, PerronTree, _Rotated)):
        return _geometry_coverage(recipe_geometry(recipe), grid)
    if isinstance(recipe, UnionRotations):
        comps = recipe.components()
        if all(isinstance(c, _Rotated) for c in comps):
            return _geometry_coverage(unary_union([recipe_geometry(c) for c in comps]), grid)
        # overlapping anti-aliased pieces: the per-cell max is a lower bound for the union
        cov = np.zeros(grid.shape)
        for comp in comps:
            np.maximum(cov, _coverage(comp, grid), out=cov)
        return cov
    raise TypeError(f"unsupported recipe {type(recipe).__name__}")


def generate(recipe, grid: GridSpec) -> RasterSet:
    if isinstance(recipe, Custom):
        from .formats import read_raster

        raster = read_raster(recipe.path)
        if raster.grid != grid:
            raise ValueError(f"raster at {recipe.path} has grid {raster.grid}, expected {grid}")
        return raster
    need = recipe.min_feature()
    if grid.h > need * (1 + 1e-9):
        raise FeatureSizeError(
            f"{type(recipe).__name__} needs cell size h <= {need:.6g} "
            f"(at least {math.ceil(grid.side / need)} cells per side), got h = {grid.h:.6g}"
        )
    return RasterSet(grid, _coverage(recipe, grid))


def grid_for(recipe, h: float, margin: float = 0.0) -> GridSpec:
    lo, hi = recipe.bounds()
    return GridSpec.covering((lo[0] - margin, lo[1] - margin), (hi[0] + margin, hi[1] + margin), h)


def neighborhood(K: RasterSet, delta: float) -> RasterSet:
    """Closed delta-dilation: cells whose centre lies within delta of a cell meeting K."""
    h = K.grid.h
    if delta < 2 * h * (1 - 1e-9):
        raise ValueError(f"delta={delta:g} must be at least 2h={2 * h:g}")
    support = K.support()
    if not support.any():
        return RasterSet(K.grid, np.zeros(K.grid.shape))
    dist = ndimage.distance_transform_edt(~support) * h
    return RasterSet(K.grid, np.where(dist <= delta * (1 + 1e-12), 1.0, K.coverage))


def perron_area_trend(depths, delta: float | None = None, h: float | None = None, copies: int = 1) -> list[float]:
    """Area of the Perron tree (or of its delta-neighbourhood) for each depth."""
    out = []
    for k in depths:
        recipe = PerronTree(int(k), copies)
        if delta is None:
            out.append(float(recipe.geometry().area))
            continue
        step = h if h is not None else delta / 4
        grid = grid_for(recipe, step, margin=delta + 2 * step)
        out.append(neighborhood(generate(recipe, grid), delta).area)
    return out


# --- (de)serialisation of recipes --------------------------------------------

def recipe_to_dict(recipe) -> dict:
    if isinstance(recipe, Square):
        return {"kind": "square", "side": recipe.side}
    if isinstance(recipe, Disc):
        return {"kind": "disc", "radius": recipe.radius, "center": list(recipe.center)}
    if isinstance(recipe, CantorProduct):
        return {"kind": "cantor_product", "ratio": recipe.ratio, "depth": recipe.depth, "angle": recipe.angle}
    if isinstance(recipe, PerronTree):
        return {"kind": "perron_tree", "depth": recipe.depth, "copies": recipe.copies}
    if isinstance(recipe, UnionRotations):
        return {"kind": "union_rotations", "base": recipe_to_dict(recipe.base), "angles": list(recipe.angles)}
    if isinstance(recipe, Custom):
        return {"kind": "custom", "path": recipe.path}
    raise TypeError(f"unsupported recipe {type(recipe).__name__}")


_RECIPE_KEYS = {
    "square": ({"side"}, set()),
    "disc": ({"radius"}, {"center"}),
    "cantor_product": ({"ratio", "depth"}, {"angle"}),
    "perron_tree": ({"depth"}, {"copies"}),
    "union_rotations": ({"base"}, {"angles", "n_angles"}),
    "custom": ({"path"}, set()),
}


def recipe_from_dict(d: dict, where: str = "recipe"):
    if not isinstance(d, dict) or "kind" not in d:
        raise ValueError(f"{where}: expected an object with a 'kind' key")
    kind = d["kind"]
    if kind not in _RECIPE_KEYS:
        raise ValueError(f"{where}.kind: unknown recipe kind {kind!r}")
    required, optional = _RECIPE_KEYS[kind]
    keys = set(d) - {"kind"}
    if missing := required - keys:
        raise ValueError(f"{where}: missing key(s) {sorted(missing)}")
    if extra := keys - required - optional:
        raise ValueError(f"{where}: unknown key(s) {sorted(extra)}")
    if kind == "square":
        return Square(float(d["side"]))
    if kind == "disc":
        return Disc(float(d["radius"]), tuple(d.get("center", CENTER)))
    if kind == "cantor_product":
        return CantorProduct(float(d["ratio"]), int(d["depth"]), float(d.get("angle", 0.0)))
    if kind == "perron_tree":
        return PerronTree(int(d["depth"]), int(d.get("copies", 1)))
    if kind == "union_rotations":
        if "angles" in d:
            angles = [float(a) for a in d["angles"]]
        elif "n_angles" in d:
            n = int(d["n_angles"])
            angles = [k * math.pi / n for k in range(n)]
        else:
            raise ValueError(f"{where}: union_rotations needs 'angles' or 'n_angles'")
        return UnionRotations(recipe_from_dict(d["base"], f"{where}.base"), angles)
    return Custom(str(d["path"]))
