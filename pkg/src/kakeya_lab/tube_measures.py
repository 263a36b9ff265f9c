"""(delta, e, s)-measures: one weighted delta x 1 rectangle per tube.

Also holds the Frostman -> discretised -> lifted pipeline and the exact
correlation integral between two such measures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .frostman import StepMeasure1D, growth_ratio
from .geometry import (
    Direction,
    GridSpec,
    RasterSet,
    RectSpec,
    TubeId,
    projection_interval,
    rasterize_rect,
    rect_intersection_area,
)

TOL = 1e-9
DISCRETIZE_FACTOR = 0.1


class InvalidMeasureError(ValueError):
    pass


class LiftError(ValueError):
    def __init__(self, tubes: list[int], message: str):
        super().__init__(message)
        self.tubes = tubes


@dataclass(frozen=True)
class TubeRectMeasure:
    """``entries`` maps tube index j to (rectangle offset, weight a_j)."""

    direction: Direction
    delta: float
    s: float
    entries: Mapping[int, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean = {int(j): (float(o), float(a)) for j, (o, a) in sorted(self.entries.items())}
        object.__setattr__(self, "entries", clean)
        self.validate()

    def validate(self) -> None:
        if not self.delta > 0 or not 0 < self.s <= 1:
            raise InvalidMeasureError("need delta > 0 and 0 < s <= 1")
        for j, (o, a) in self.entries.items():
            if a < 0 or not math.isfinite(a) or not math.isfinite(o):
                raise InvalidMeasureError(f"tube {j}: weight must be finite and nonnegative")
        if self.mass > 1 + TOL:
            raise InvalidMeasureError(f"L1 norm {self.mass:.12g} exceeds 1")
        ratio = growth_ratio(self.pushforward(), self.s)
        if ratio > 1 + TOL:
            raise InvalidMeasureError(f"projected growth ratio {ratio:.12g} exceeds 1")

    @property
    def mass(self) -> float:
        return self.delta * math.fsum(a for _, a in self.entries.values())

    def rect(self, j: int) -> RectSpec:
        return RectSpec(TubeId(self.direction, self.delta, j), self.entries[j][0])

    def items(self) -> Iterator[tuple[RectSpec, float]]:
        for j, (_, a) in self.entries.items():
            yield self.rect(j), a

    def pushforward(self) -> StepMeasure1D:
        return pushforward(self)

    def csv_rows(self) -> list[tuple[int, float, float]]:
        return [(j, o, a) for j, (o, a) in self.entries.items()]


def pushforward(mu: TubeRectMeasure) -> StepMeasure1D:
    """Projection onto the e-axis: tube j carries delta * a_j."""
    return StepMeasure1D.from_cells(mu.delta, {j: mu.delta * a for j, (_, a) in mu.entries.items()})


def discretize_frostman(nu_tilde: StepMeasure1D, delta: float) -> StepMeasure1D:
    """Cell masses nu_tilde([j d, (j+1) d)) / 10 on the delta grid."""
    if len(nu_tilde.weights) == 0:
        return StepMeasure1D.zero(delta)
    if math.isclose(nu_tilde.delta, delta, rel_tol=1e-12):
        return StepMeasure1D(delta, nu_tilde.lo, nu_tilde.weights * DISCRETIZE_FACTOR)
    lo = math.floor(nu_tilde.lo * nu_tilde.delta / delta)
    hi = math.ceil(nu_tilde.hi * nu_tilde.delta / delta)
    cells = {j: DISCRETIZE_FACTOR * nu_tilde.mass(j * delta, (j + 1) * delta) for j in range(lo, hi)}
    return StepMeasure1D.from_cells(delta, {j: m for j, m in cells.items() if m > 0})


@dataclass
class CellFrame:
    """Cell centres of a raster expressed in the (x.e, x.e_perp) frame of one direction."""

    s: np.ndarray
    t: np.ndarray
    t0: float
    half_a: float
    half_b: float

    @classmethod
    def build(cls, grid: GridSpec, e: Direction, mask: np.ndarray | None = None) -> "CellFrame":
        X, Y = grid.centers()
        if mask is not None:
            X, Y = X[mask], Y[mask]
        else:
            X, Y = X.ravel(), Y.ravel()
        ca, sa = e.e
        x0, y0, x1, y1 = grid.extent
        corners_t = [-sa * x + ca * y for x, y in ((x0, y0), (x1, y0), (x0, y1), (x1, y1))]
        return cls(
            s=ca * X + sa * Y,
            t=-sa * X + ca * Y,
            t0=min(corners_t),
            half_a=grid.h * abs(ca) / 2,
            half_b=grid.h * abs(sa) / 2,
        )


def window_length(grid: GridSpec) -> int:
    n = round(1.0 / grid.h)
    if abs(n * grid.h - 1.0) > 1e-9:
        raise ValueError(f"cell size h={grid.h:g} must divide the rectangle length 1")
    return n


def _rect_inside_grid(grid: GridSpec, e: Direction, j: int, delta: float, offsets: np.ndarray) -> np.ndarray:
    ev, pv = e.e, e.perp
    ok = np.ones(len(offsets), dtype=bool)
    for s in (j * delta, (j + 1) * delta):
        for dt in (0.0, 1.0):
            pts = s * ev[None, :] + (offsets + dt)[:, None] * pv[None, :]
            ok &= grid.contains(pts)
    return ok


def lift_to_rectangles(nu: StepMeasure1D, K_delta: RasterSet, e: Direction, s: float) -> TubeRectMeasure:
    """One rectangle per charged tube, inside K_delta, with weight nu(cell) / delta.

    A rectangle counts as inside when every cell centred in it lies in a cell
    with coverage >= 1/2.  Centres within one raster step of the two long
    sides are not checked: the neighbourhood raster measures distances from
    cell centres, which can misplace its edge by up to h across the tube.
    Offsets run over the h-lattice of the tube axis and the smallest
    admissible one is taken.
    """
    delta = nu.delta
    grid = K_delta.grid
    h = grid.h
    if h > delta / 4 * (1 + 1e-9):
        raise ValueError(f"raster cell {h:g} too coarse for delta={delta:g}; need h <= delta/4")
    charged = nu.cells()
    if not charged:
        return TubeRectMeasure(e, delta, s, {})
    L = window_length(grid)
    frame = CellFrame.build(grid, e)
    bad = K_delta.coverage.ravel() < 0.5
    n_bins = int(math.ceil((max(frame.t.max(), frame.t0) - frame.t0) / h)) + 1
    entries: dict[int, tuple[float, float]] = {}
    failed: list[int] = []
    for j in sorted(charged):
        lo, hi = j * delta + h, (j + 1) * delta - h
        core = (frame.s >= lo) & (frame.s <= hi)
        counts = np.zeros(n_bins + L + 1)
        if np.any(core & bad):
            kb = np.floor((frame.t[core & bad] - frame.t0) / h).astype(np.int64)
            np.add.at(counts, np.clip(kb, 0, len(counts) - 1), 1.0)
        prefix = np.concatenate([[0.0], np.cumsum(counts)])
        starts = np.arange(0, n_bins)
        # a bad cell centred anywhere in the window disqualifies it
        blocked = prefix[starts + L] - prefix[starts] > 0
        offsets = frame.t0 + starts * h
        ok = ~blocked & _rect_inside_grid(grid, e, j, delta, offsets)
        if not ok.any():
            failed.append(j)
            continue
        k = int(np.argmax(ok))
        entries[j] = (float(offsets[k]), charged[j] / delta)
    if failed:
        raise LiftError(failed, f"no delta x 1 rectangle inside K(delta) for tube(s) {failed}")
    return TubeRectMeasure(e, delta, s, entries)


def correlation(mu1: TubeRectMeasure, mu2: TubeRectMeasure) -> float:
    """Exact integral of mu1 * mu2 as a sum of weighted rectangle overlaps.

    Only pairs whose projections onto mu1's axis can meet are clipped; the
    terms are summed with ``math.fsum`` so the result does not depend on order.
    """
    if not mu1.entries or not mu2.entries:
        return 0.0
    d1 = mu1.delta
    e1 = mu1.direction
    keys1 = np.array(sorted(mu1.entries))
    terms = []
    for rect2, b in mu2.items():
        if b == 0:
            continue
        lo, hi = projection_interval(e1, rect2)
        i0 = np.searchsorted(keys1, math.floor(lo / d1), side="left")
        i1 = np.searchsorted(keys1, math.floor(hi / d1), side="right")
        for j in keys1[i0:i1]:
            a = mu1.entries[int(j)][1]
            if a == 0:
                continue
            area = rect_intersection_area(mu1.rect(int(j)), rect2)
            if area > 0:
                terms.append(a * b * area)
    return math.fsum(terms)


def raster_density(mu: TubeRectMeasure, grid: GridSpec) -> np.ndarray:
    dens = np.zeros(grid.shape)
    for rect, a in mu.items():
        dens += a * rasterize_rect(rect, grid)
    return dens


def correlation_raster(mu1: TubeRectMeasure, mu2: TubeRectMeasure, grid: GridSpec) -> float:
    """Independent check of ``correlation``: product of rasterised densities."""
    return float(np.sum(raster_density(mu1, grid) * raster_density(mu2, grid))) * grid.h**2
