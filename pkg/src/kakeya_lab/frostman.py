"""Frostman measures on grid sets of the line and of direction space.

Both constructions are the bottom-up dyadic one: start with the maximal
admissible mass on every occupied cell, then walk up the dyadic levels and
shrink every block whose mass exceeds ``length**exponent``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .geometry import angle_chord

# a dyadic interval bound gives an arbitrary-interval bound up to this factor
DYADIC_SLACK = 4.0


@dataclass(frozen=True)
class StepMeasure1D:
    """Piecewise-constant measure; cell ``lo + k`` is ``[(lo+k)*delta, (lo+k+1)*delta)``."""

    delta: float
    lo: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float).ravel()
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("step measure weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "lo", int(self.lo))

    @classmethod
    def zero(cls, delta: float) -> "StepMeasure1D":
        return cls(delta, 0, np.zeros(0))

    @classmethod
    def from_cells(cls, delta: float, cells: dict[int, float]) -> "StepMeasure1D":
        if not cells:
            return cls.zero(delta)
        lo, hi = min(cells), max(cells)
        w = np.zeros(hi - lo + 1)
        for j, m in cells.items():
            w[j - lo] += m
        return cls(delta, lo, w)

    @property
    def hi(self) -> int:
        """One past the last cell index."""
        return self.lo + len(self.weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def cell(self, j: int) -> float:
        k = j - self.lo
        if 0 <= k < len(self.weights):
            return float(self.weights[k])
        return 0.0

    def cells(self) -> dict[int, float]:
        return {self.lo + k: float(m) for k, m in enumerate(self.weights) if m > 0}

    def mass(self, a: float, b: float) -> float:
        """Mass of [a, b), splitting partially covered cells by length."""
        if b <= a or len(self.weights) == 0:
            return 0.0
        d = self.delta
        idx = np.arange(self.lo, self.hi)
        left = np.maximum(idx * d, a)
        right = np.minimum((idx + 1) * d, b)
        frac = np.clip(right - left, 0.0, None) / d
        return float(np.dot(frac, self.weights))

    def trimmed(self) -> "StepMeasure1D":
        nz = np.flatnonzero(self.weights > 0)
        if len(nz) == 0:
            return StepMeasure1D.zero(self.delta)
        return StepMeasure1D(self.delta, self.lo + nz[0], self.weights[nz[0]: nz[-1] + 1])

    def csv_rows(self) -> list[tuple[int, float]]:
        return [(self.lo + k, float(m)) for k, m in enumerate(self.weights)]


@dataclass(frozen=True)
class CompactGridSet1D:
    delta: float
    occupied: frozenset[int]

    def __init__(self, delta: float, occupied: Iterable[int]):
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "occupied", frozenset(int(j) for j in occupied))

    @classmethod
    def from_intervals(cls, delta: float, intervals: Iterable[tuple[float, float]]) -> "CompactGridSet1D":
        """Cells ``[j*delta, (j+1)*delta)`` sharing positive length with some ``[a, b]``.

        Endpoints within ``1e-9 * delta`` of a cell boundary are snapped to it,
        so an interval that only touches a neighbouring cell does not claim it.
        A degenerate interval claims the cell containing it.
        """
        occ: set[int] = set()
        eps = 1e-9
        for a, b in intervals:
            lo, hi = a / delta, b / delta
            if hi - lo <= eps:
                occ.add(math.floor(lo + eps))
                continue
            occ.update(range(math.floor(lo + eps), math.ceil(hi - eps)))
        return cls(delta, occ)

    def sorted(self) -> np.ndarray:
        return np.array(sorted(self.occupied), dtype=np.int64)

    def runs(self) -> list[tuple[int, int]]:
        """Maximal runs of consecutive occupied cells as inclusive index pairs."""
        idx = self.sorted()
        if len(idx) == 0:
            return []
        breaks = np.flatnonzero(np.diff(idx) > 1)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [len(idx) - 1]])
        return [(int(idx[a]), int(idx[b])) for a, b in zip(starts, ends)]


def _nonnegative(index: np.ndarray) -> np.ndarray:
    """Shift cell indices to be nonnegative, keeping dyadic alignment up to the span.

    Under ``>>`` negative blocks never merge with nonnegative ones, so the
    ascent would not reach a single block without this.
    """
    top = max(int(index.max() - index.min()), 1).bit_length()
    return index - (int(index.min()) >> top << top)


def _dyadic_ascent(index: np.ndarray, mass: np.ndarray, cap) -> np.ndarray:
    """Shrink masses so every dyadic block of ``2**k`` cells holds at most ``cap(2**k)``."""
    mass = mass.copy()
    index = _nonnegative(index)
    k = 0
    while True:
        k += 1
        blocks = index >> k
        uniq, inv = np.unique(blocks, return_inverse=True)
        totals = np.bincount(inv, weights=mass)
        limit = cap(2**k)
        with np.errstate(divide="ignore", invalid="ignore"):
            factor = np.where(totals > limit, limit / totals, 1.0)
        mass *= factor[inv]
        if len(uniq) == 1:
            return mass


def frostman_build_1d(cells: CompactGridSet1D, s: float) -> StepMeasure1D:
    if not cells.occupied:
        raise ValueError("empty support")
    if not 0 < s <= 1:
        raise ValueError("exponent s must lie in (0, 1]")
    d = cells.delta
    idx = cells.sorted()
    mass = np.full(len(idx), d**s)
    mass = _dyadic_ascent(idx, mass, lambda n: (n * d) ** s)
    return StepMeasure1D.from_cells(d, dict(zip(idx.tolist(), mass.tolist())))


def growth_ratio(mu: StepMeasure1D, s: float) -> float:
    """max over grid intervals [p*delta, q*delta) of mu(I) / len(I)**s."""
    mu = mu.trimmed()
    n = len(mu.weights)
    if n == 0:
        return 0.0
    prefix = np.concatenate([[0.0], np.cumsum(mu.weights)])
    best = 0.0
    for length in range(1, n + 1):
        window = prefix[length:] - prefix[:-length]
        best = max(best, float(window.max()) / (length * mu.delta) ** s)
    return best


def dyadic_growth_ratio(mu: StepMeasure1D, s: float) -> float:
    mu = mu.trimmed()
    if len(mu.weights) == 0:
        return 0.0
    idx = _nonnegative(np.arange(mu.lo, mu.hi))
    best = 0.0
    k = 0
    while True:
        uniq, inv = np.unique(idx >> k, return_inverse=True)
        totals = np.bincount(inv, weights=mu.weights)
        best = max(best, float(totals.max()) / (2**k * mu.delta) ** s)
        if len(uniq) == 1:
            return best
        k += 1


def hausdorff_content(cells: CompactGridSet1D, s: float) -> float:
    """H^s_infinity of the union of closed cells, exact over interval covers.

    An optimal cover by intervals may be taken to consist of hulls of
    consecutive runs, so a dynamic program over runs is exact.
    """
    runs = cells.runs()
    if not runs:
        return 0.0
    d = cells.delta
    starts = np.array([a for a, _ in runs], dtype=float) * d
    ends = (np.array([b for _, b in runs], dtype=float) + 1) * d
    best = np.zeros(len(runs) + 1)
    for i in range(len(runs)):
        spans = (ends[i] - starts[: i + 1]) ** s
        best[i + 1] = float(np.min(best[: i + 1] + spans))
    return float(best[-1])


def frostman_report(cells: CompactGridSet1D, mu: StepMeasure1D, s: float) -> dict[str, float]:
    content = hausdorff_content(cells, s)
    return {
        "mass": mu.total,
        "content": content,
        "mass_over_content": mu.total / content if content > 0 else math.nan,
        "dyadic_ratio": dyadic_growth_ratio(mu, s),
        "growth_ratio": growth_ratio(mu, s),
        "slack": DYADIC_SLACK,
    }


@dataclass(frozen=True)
class CircleMeasure:
    """Measure on directions [0, pi); cell k is centred at angle ``k * pi / n_cells``."""

    masses: np.ndarray = field(repr=False)
    exponent: float

    def __post_init__(self) -> None:
        m = np.asarray(self.masses, dtype=float).ravel()
        if len(m) == 0 or np.any(m < 0):
            raise ValueError("circle measure needs nonnegative masses on at least one cell")
        object.__setattr__(self, "masses", m)

    @property
    def n_cells(self) -> int:
        return len(self.masses)

    @property
    def width(self) -> float:
        return math.pi / self.n_cells

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    @property
    def angles(self) -> np.ndarray:
        return np.arange(self.n_cells) * self.width

    def distances(self) -> np.ndarray:
        a = self.angles
        return angle_chord(a[:, None] - a[None, :])

    def mass_of(self, cells: Iterable[int]) -> float:
        idx = np.fromiter(cells, dtype=np.int64)
        return float(self.masses[idx].sum()) if len(idx) else 0.0

    def csv_rows(self) -> list[tuple[int, float]]:
        return [(k, float(m)) for k, m in enumerate(self.masses)]


def ball_growth_ratio(sigma: CircleMeasure, exponent: float | None = None) -> float:
    """max over cell centres e and radii r >= cell width of sigma(B(e, r)) / r**exponent."""
    expo = sigma.exponent if exponent is None else exponent
    dist = sigma.distances()
    order = np.argsort(dist, axis=1, kind="stable")
    d_sorted = np.take_along_axis(dist, order, axis=1)
    cum = np.cumsum(sigma.masses[order], axis=1)
    r = np.maximum(d_sorted, sigma.width)
    return float(np.max(cum / r**expo))


def circle_frostman(arcs: Iterable[int], n_cells: int, t: float) -> CircleMeasure:
    """Frostman measure on the given direction cells with sigma(B(e, r)) <= r**(1 - t)."""
    idx = np.array(sorted({int(k) % n_cells for k in arcs}), dtype=np.int64)
    if len(idx) == 0:
        raise ValueError("empty arc set")
    if not 0 <= t < 1:
        raise ValueError("t must lie in [0, 1)")
    expo = 1.0 - t
    w = math.pi / n_cells
    mass = np.full(len(idx), w**expo)
    mass = _dyadic_ascent(idx, mass, lambda n: (n * w) ** expo)
    masses = np.zeros(n_cells)
    masses[idx] = mass
    sigma = CircleMeasure(masses, expo)
    ratio = ball_growth_ratio(sigma)
    if ratio > 1.0:
        sigma = CircleMeasure(masses / ratio, expo)
    return sigma


def riesz_potential(sigma: CircleMeasure, s: float, angle: float) -> float:
    """sum_e sigma(e) * max(|e - xi|, width)**(s - 1) at the direction ``angle``."""
    d = np.maximum(angle_chord(sigma.angles - angle), sigma.width)
    return float(np.dot(sigma.masses, d ** (s - 1.0)))


def riesz_integral(sigma: CircleMeasure, s: float) -> float:
    t = 1.0 - sigma.exponent
    if t >= s:
        warnings.warn(
            f"growth exponent 1-t={sigma.exponent:g} with t >= s={s:g}: "
            "the Riesz integral is not bounded uniformly in the resolution",
            RuntimeWarning,
            stacklevel=2,
        )
    d = np.maximum(sigma.distances(), sigma.width)
    pot = (d ** (s - 1.0)) @ sigma.masses
    support = sigma.masses > 0
    return float(pot[support].max())
