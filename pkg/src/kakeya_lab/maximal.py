"""The multi-line maximal operator M^delta f(e).

The supremum over (delta, e, s)-measures splits exactly into two stages:
``int f dmu = sum_T a_T int_{R_T} f`` and the constraints only involve the
weights, so each tube independently takes its best rectangle and the weights
then solve a packing program with interval constraints.

The interval family with caps ``min((len * delta)**s, 1)`` is closed under
union and intersection of overlapping members and the caps are submodular
there (concavity of ``x**s``), so the feasible weights form a polymatroid and
the greedy fill in decreasing value order is optimal.  The dyadic family used
for large programs is laminar, for which the same holds.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog

from .geometry import Direction, RasterSet, RectSpec, TubeId, trapezoid_cdf
from .tube_measures import CellFrame, TubeRectMeasure, window_length

FULL_INTERVAL_LIMIT = 512
DYADIC_SLACK = 4.0


@dataclass(frozen=True)
class WeightProgram:
    """max sum a_j v_j subject to a >= 0, delta * sum_I a <= min(len(I)**s, 1) on intervals."""

    delta: float
    s: float
    values: np.ndarray = field(repr=False)
    j0: int = 0

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float).ravel()
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("tube values must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def dyadic(self) -> bool:
        return self.n > FULL_INTERVAL_LIMIT

    def intervals(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return constraint_intervals(self.n, self.delta, self.s, dyadic=self.dyadic)


def constraint_intervals(n: int, delta: float, s: float, dyadic: bool = False):
    """Arrays (start, stop, cap) of the interval constraints on cell masses ``delta * a``."""
    if n == 0:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    if not dyadic:
        p, q = np.triu_indices(n + 1, k=1)
        cap = np.minimum(((q - p) * delta) ** s, 1.0)
        return p, q, cap
    ps, qs, caps = [], [], []
    size = 1
    while size < 2 * n:
        starts = np.arange(0, n, size)
        stops = np.minimum(starts + size, n)
        ps.append(starts)
        qs.append(stops)
        # a dyadic cap of (len)^s / 4 keeps every interval under len^s
        caps.append(np.full(len(starts), (size * delta) ** s / DYADIC_SLACK))
        size *= 2
    ps.append(np.array([0]))
    qs.append(np.array([n]))
    caps.append(np.array([min((n * delta) ** s, 1.0)]))
    return np.concatenate(ps), np.concatenate(qs), np.minimum(np.concatenate(caps), 1.0)


def greedy_masses(scores: np.ndarray, p: np.ndarray, q: np.ndarray, cap: np.ndarray) -> np.ndarray:
    """Greedy fill of cell masses for a batch of score rows (shape (B, n)).

    Cells are raised in decreasing score order (ties by index) to the largest
    value the interval caps allow; zero-score cells stay empty.
    """
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    B, n = scores.shape
    x = np.zeros((B, n))
    if n == 0:
        return x
    order = np.argsort(-scores, axis=1, kind="stable")
    rows = np.arange(B)
    for k in range(n):
        j = order[:, k]
        prefix = np.zeros((B, n + 1))
        np.cumsum(x, axis=1, out=prefix[:, 1:])
        slack = cap[None, :] - (prefix[:, q] - prefix[:, p])
        covers = (p[None, :] <= j[:, None]) & (q[None, :] > j[:, None])
        room = np.min(np.where(covers, slack, np.inf), axis=1)
        x[rows, j] = np.where(scores[rows, j] > 0, np.maximum(room, 0.0), 0.0)
    return x


def solve_weights_batch(values: np.ndarray, delta: float, s: float) -> np.ndarray:
    """Optimal weights a for many programs sharing (n, delta, s); rows of ``values`` are v."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    n = values.shape[1]
    p, q, cap = constraint_intervals(n, delta, s, dyadic=n > FULL_INTERVAL_LIMIT)
    return greedy_masses(values, p, q, cap) / delta


def _solve_lp(prog: WeightProgram) -> tuple[np.ndarray, dict]:
    n = prog.n
    p, q, cap = prog.intervals()
    A = np.zeros((len(p), n))
    for r, (a, b) in enumerate(zip(p, q)):
        A[r, a:b] = 1.0
    res = linprog(-prog.values / prog.delta, A_ub=A, b_ub=cap, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    primal = float(np.dot(prog.values / prog.delta, x))
    dual = float(np.dot(-res.ineqlin.marginals, cap))
    diag = {"method": "lp", "iterations": int(res.nit), "duality_gap": abs(dual - primal)}
    return x / prog.delta, diag


def solve_weights(prog: WeightProgram, method: str = "greedy") -> np.ndarray:
    return solve_weights_diag(prog, method)[0]


def solve_weights_diag(prog: WeightProgram, method: str = "greedy") -> tuple[np.ndarray, dict]:
    if prog.n == 0:
        return np.zeros(0), {"method": method, "iterations": 0, "duality_gap": 0.0}
    if method == "lp":
        return _solve_lp(prog)
    if method != "greedy":
        raise ValueError(f"unknown method {method!r}")
    a = solve_weights_batch(prog.values[None, :], prog.delta, prog.s)[0]
    return a, {"method": "greedy", "iterations": prog.n, "duality_gap": 0.0}


def objective(prog: WeightProgram, a: np.ndarray) -> float:
    return float(np.dot(prog.values, a))


def binding_length(prog: WeightProgram, a: np.ndarray, rtol: float = 1e-9) -> float:
    """Length of the longest interval constraint that is tight at ``a`` (0 if none)."""
    p, q, cap = prog.intervals()
    if len(p) == 0:
        return 0.0
    prefix = np.concatenate([[0.0], np.cumsum(prog.delta * a)])
    tight = cap - (prefix[q] - prefix[p]) <= rtol * np.maximum(cap, 1e-300)
    tight &= prefix[q] - prefix[p] > 0
    if not tight.any():
        return 0.0
    return float(np.max(q[tight] - p[tight])) * prog.delta


# --- per-tube rectangle search -------------------------------------------------

@dataclass
class TubeWindows:
    """Binned tube integrals of f in one direction.

    ``bins[j - j_min, k]`` holds the integral of f over tube j restricted to the
    k-th h-slice of the tube axis (starting at ``t0``).  Cells are split across
    slabs and slices with the exact trapezoid profile of a rotated square.
    """

    direction: Direction
    delta: float
    h: float
    t0: float
    j_min: int
    bins: np.ndarray
    window: int
    fmax: float

    @classmethod
    def build(cls, f: RasterSet, e: Direction, delta: float) -> "TubeWindows":
        grid = f.grid
        h = grid.h
        if h > delta / 4 * (1 + 1e-9):
            raise ValueError(f"raster cell {h:g} too coarse for delta={delta:g}; need h <= delta/4")
        L = window_length(grid)
        mask = f.coverage > 0
        frame = CellFrame.build(grid, e, mask)
        vals = f.coverage[mask] * h * h
        if len(vals) == 0:
            return cls(e, delta, h, frame.t0, 0, np.zeros((0, 1)), L, 0.0)
        reach = frame.half_a + frame.half_b
        parts = []
        j_lo = np.floor((frame.s - reach) / delta).astype(np.int64)
        k_lo = np.floor((frame.t - reach - frame.t0) / h).astype(np.int64)
        for dj in range(3):
            j = j_lo + dj
            fs = trapezoid_cdf((j + 1) * delta - frame.s, frame.half_a, frame.half_b) - trapezoid_cdf(
                j * delta - frame.s, frame.half_a, frame.half_b)
            for dk in range(3):
                k = k_lo + dk
                ft = trapezoid_cdf(frame.t0 + (k + 1) * h - frame.t, frame.half_a, frame.half_b) - trapezoid_cdf(
                    frame.t0 + k * h - frame.t, frame.half_a, frame.half_b)
                w = vals * fs * ft
                keep = w > 0
                parts.append((j[keep], k[keep], w[keep]))
        js = np.concatenate([p[0] for p in parts])
        ks = np.concatenate([p[1] for p in parts])
        ws = np.concatenate([p[2] for p in parts])
        j_min = int(js.min())
        k_off = min(int(ks.min()), 0)
        n_j = int(js.max()) - j_min + 1
        n_k = int(ks.max()) - k_off + 1
        bins = np.zeros((n_j, n_k))
        np.add.at(bins, (js - j_min, ks - k_off), ws)
        return cls(e, delta, h, frame.t0 + k_off * h, j_min, bins, L, float(f.coverage.max()))

    @property
    def tube_range(self) -> range:
        return range(self.j_min, self.j_min + self.bins.shape[0])

    def window_sums(self) -> np.ndarray:
        n_j, n_k = self.bins.shape
        prefix = np.zeros((n_j, n_k + self.window + 1))
        np.cumsum(self.bins, axis=1, out=prefix[:, 1: n_k + 1])
        prefix[:, n_k + 1:] = prefix[:, n_k: n_k + 1]
        return prefix[:, self.window: self.window + n_k] - prefix[:, :n_k]

    def best(self) -> tuple[np.ndarray, np.ndarray]:
        """Best value per tube (clamped to the true bound delta * max f) and its offset."""
        if self.bins.shape[0] == 0:
            return np.zeros(0), np.zeros(0)
        sums = self.window_sums()
        top = sums.max(axis=1)
        # smallest offset among maximisers, ignoring rounding-level differences
        k = np.argmax(sums >= top[:, None] - 1e-12 * np.maximum(top[:, None], 1e-300), axis=1)
        v = np.minimum(top, self.delta * self.fmax)
        return v, self.t0 + k * self.h

    def integral(self, j: int, offset: float) -> float:
        """Binned integral of f over the rectangle (j, offset); offset must sit on the lattice."""
        k = (offset - self.t0) / self.h
        kr = round(k)
        if abs(k - kr) > 1e-6:
            raise ValueError("offset is not on the h-lattice of this direction")
        row = j - self.j_min
        if not 0 <= row < self.bins.shape[0]:
            return 0.0
        lo = max(kr, 0)
        hi = max(min(kr + self.window, self.bins.shape[1]), lo)
        return min(float(self.bins[row, lo:hi].sum()), self.delta * self.fmax)


def tube_best_rect(f: RasterSet, tube: TubeId) -> tuple[float, float]:
    tw = TubeWindows.build(f, tube.direction, tube.delta)
    if tube.j not in tw.tube_range:
        return 0.0, 0.0
    v, off = tw.best()
    row = tube.j - tw.j_min
    return float(off[row]), float(v[row])


def rect_integral(f: RasterSet, rect: RectSpec) -> float:
    return TubeWindows.build(f, rect.direction, rect.delta).integral(rect.tube.j, rect.offset)


@dataclass
class MaximalResult:
    direction: Direction
    delta: float
    s: float
    value: float
    weights: dict[int, float]
    offsets: dict[int, float]
    diagnostics: dict

    def measure(self) -> TubeRectMeasure:
        return TubeRectMeasure(
            self.direction, self.delta, self.s,
            {j: (self.offsets[j], a) for j, a in self.weights.items() if a > 0},
        )

    @property
    def mass(self) -> float:
        return self.delta * math.fsum(self.weights.values())


def maximal_value(f: RasterSet, e: Direction, delta: float, s: float,
                  method: str = "greedy", cross_check: bool = False) -> MaximalResult:
    tw = TubeWindows.build(f, e, delta)
    v, off = tw.best()
    if len(v) == 0 or not np.any(v > 0):
        diag = {"method": method, "iterations": 0, "duality_gap": 0.0, "binding_length": 0.0, "tubes": 0}
        return MaximalResult(e, delta, s, 0.0, {}, {}, diag)
    prog = WeightProgram(delta, s, v, tw.j_min)
    a, diag = solve_weights_diag(prog, method)
    value = objective(prog, a)
    if cross_check and method != "lp":
        lp_a, lp_diag = _solve_lp(prog)
        lp_value = objective(prog, lp_a)
        diag = {**diag, "lp_value": lp_value, "lp_gap": abs(lp_value - value), "lp_iterations": lp_diag["iterations"]}
    diag["binding_length"] = binding_length(prog, a)
    diag["tubes"] = prog.n
    weights = {tw.j_min + i: float(a[i]) for i in range(prog.n) if a[i] > 0}
    offsets = {j: float(off[j - tw.j_min]) for j in weights}
    return MaximalResult(e, delta, s, value, weights, offsets, diag)


def sweep_angles(n_dirs: int) -> np.ndarray:
    return np.arange(n_dirs) * (math.pi / n_dirs)


def direction_sweep(f: RasterSet, delta: float, s: float, n_dirs: int,
                    threads: int = 1, angles: Sequence[float] | None = None) -> list[MaximalResult]:
    if angles is None:
        if n_dirs < 2:
            raise ValueError("n_dirs must be at least 2")
        angles = sweep_angles(n_dirs)
    dirs = [Direction(a) for a in angles]
    if threads <= 1:
        return [maximal_value(f, d, delta, s) for d in dirs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda d: maximal_value(f, d, delta, s), dirs))
