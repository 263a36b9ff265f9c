"""End-to-end numerical experiments and their configuration schema.

Each experiment returns an :class:`ExperimentReport` holding tables, fitted
exponents, SVG figures and pass/fail flags.  Work items (directions, scales)
may run on a thread pool; results are gathered in input order, so reports do
not depend on the number of threads.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import __version__
from .formats import canonical_json, config_hash, csv_bytes, render_measures_svg, render_scatter_svg, render_strip_svg
from .frostman import (
    circle_frostman,
    frostman_build_1d,
    frostman_report,
    riesz_integral,
)
from .geometry import GridSpec, RasterSet, angle_chord
from .maximal import direction_sweep, sweep_angles
from .testsets import (
    Custom,
    UnionRotations,
    CantorProduct,
    generate,
    grid_for,
    neighborhood,
    perron_area_trend,
    projected_grid_set,
    recipe_from_dict,
    segment_families,
)
from .tube_measures import LiftError, TubeRectMeasure, correlation, correlation_raster, discretize_frostman, lift_to_rectangles

EXPERIMENTS = ("maximal", "correlation", "weaktype", "dichotomy", "chain", "frostman")

# acceptance thresholds
WEAK_TYPE_SPREAD = 0.20
WEAK_TYPE_SLOPE = 0.10
CORRELATION_SPREAD = 2.0
CORRELATION_SLOPE_SLACK = 0.10
ORACLE_RTOL = 0.02
PERRON_DECREASE = 0.30
MULTILINE_BAND = 0.10
CHAIN_STABILITY = 0.10
LIFT_FAILURE_LIMIT = 0.10
FROSTMAN_SLACK = 4.0
FROSTMAN_MASS_FRACTION = 0.25
RIESZ_SPREAD = 2.0
# raster oracle cell size cap, independent of the experiment grid
ORACLE_STEP = 2.0**-9


class ConfigError(ValueError):
    """Schema violation; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# --- configuration ---------------------------------------------------------------

_REQUIRED = ("recipe", "s", "t", "deltas")
_OPTIONAL = {
    "lambdas": None,
    "directions": 64,
    "pairs": 200,
    "seed": 0,
    "cells_per_delta": 4,
    "sigma_arcs": None,
    "oracle_pairs": 8,
    "perron": None,
    "circle_cells": [16, 64, 256, 1024],
}
_PERRON_KEYS = {"depths", "delta", "copies"}


def _number(d: dict, key: str, kind=float):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(key, f"expected a number, got {type(v).__name__}")
    if kind is int and float(v) != int(v):
        raise ConfigError(key, "expected an integer")
    return kind(v)


def _number_list(d: dict, key: str, kind=float) -> tuple:
    v = d[key]
    if not isinstance(v, list) or not v:
        raise ConfigError(key, "expected a non-empty list of numbers")
    try:
        return tuple(_number({key: x}, key, kind) for x in v)
    except ConfigError:
        raise ConfigError(key, "expected a non-empty list of numbers") from None


def _resolve_recipe(raw: Any, seed: int) -> dict:
    """Replace ``n_random_angles`` by explicit seeded angles, recursively."""
    if not isinstance(raw, dict):
        raise ConfigError("recipe", "expected an object with a 'kind' key")
    out = dict(raw)
    if out.get("kind") == "union_rotations":
        if "base" in out:
            out["base"] = _resolve_recipe(out["base"], seed)
        if "n_random_angles" in out:
            n = out.pop("n_random_angles")
            if isinstance(n, bool) or not isinstance(n, int) or n < 1:
                raise ConfigError("recipe.n_random_angles", "expected a positive integer")
            if "angles" in out or "n_angles" in out:
                raise ConfigError("recipe", "give only one of angles, n_angles, n_random_angles")
            rng = np.random.default_rng(seed)
            out["angles"] = sorted(float(a) for a in rng.uniform(0.0, math.pi, n))
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    recipe: Any
    s: float
    t: float
    deltas: tuple[float, ...]
    lambdas: tuple[float, ...] | None
    directions: int
    pairs: int
    seed: int
    cells_per_delta: int
    sigma_arcs: tuple[tuple[float, float], ...] | None
    oracle_pairs: int
    perron: dict | None
    circle_cells: tuple[int, ...]
    resolved: dict = field(repr=False)

    @property
    def hash(self) -> str:
        return config_hash(self.resolved)

    @classmethod
    def from_dict(cls, raw: Any) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        unknown = sorted(set(raw) - set(_REQUIRED) - set(_OPTIONAL))
        if unknown:
            raise ConfigError(unknown[0], f"unknown key(s) {unknown}")
        for key in _REQUIRED:
            if key not in raw:
                raise ConfigError(key, "required key is missing (no default for scientific parameters)")
        d = {**_OPTIONAL, **raw}
        seed = _number(d, "seed", int)
        recipe_raw = _resolve_recipe(d["recipe"], seed)
        try:
            recipe = recipe_from_dict(recipe_raw)
        except (ValueError, TypeError) as exc:
            raise ConfigError("recipe", str(exc)) from None
        s, t = _number(d, "s"), _number(d, "t")
        if not 0 < s <= 1:
            raise ConfigError("s", "s must lie in (0, 1]")
        if not 0 <= t:
            raise ConfigError("t", "t must be nonnegative")
        if not t < s:
            raise ConfigError("t", f"requirement t < s violated (t={t:g}, s={s:g})")
        deltas = _number_list(d, "deltas")
        if any(not 0 < x < 1 for x in deltas):
            raise ConfigError("deltas", "every delta must lie in (0, 1)")
        lambdas = None if d["lambdas"] is None else _number_list(d, "lambdas")
        if lambdas is not None and any(x <= 0 for x in lambdas):
            raise ConfigError("lambdas", "every lambda must be positive")
        directions = _number(d, "directions", int)
        if directions < 2:
            raise ConfigError("directions", "need at least 2 directions")
        pairs = _number(d, "pairs", int)
        if pairs < 1:
            raise ConfigError("pairs", "need at least one pair")
        cpd = _number(d, "cells_per_delta", int)
        if cpd < 4 or cpd & (cpd - 1):
            raise ConfigError("cells_per_delta", "must be a power of two, at least 4 (so that delta >= 2h)")
        oracle = _number(d, "oracle_pairs", int)
        if oracle < 0:
            raise ConfigError("oracle_pairs", "must be nonnegative")
        arcs = None
        if d["sigma_arcs"] is not None:
            v = d["sigma_arcs"]
            if not isinstance(v, list) or not all(
                isinstance(a, list) and len(a) == 2 and all(isinstance(x, (int, float)) for x in a) for a in v
            ):
                raise ConfigError("sigma_arcs", "expected a list of [start, stop] angle pairs")
            arcs = tuple((float(a), float(b)) for a, b in v)
        perron = d["perron"]
        if perron is not None:
            if not isinstance(perron, dict):
                raise ConfigError("perron", "expected an object")
            extra = sorted(set(perron) - _PERRON_KEYS)
            if extra:
                raise ConfigError(f"perron.{extra[0]}", f"unknown key(s) {extra}")
            for key in ("depths", "delta"):
                if key not in perron:
                    raise ConfigError(f"perron.{key}", "required key is missing")
            depths = _number_list(perron, "depths", int)
            pdelta = _number(perron, "delta")
            copies = _number(perron, "copies", int) if "copies" in perron else 1
            if copies not in (1, 4):
                raise ConfigError("perron.copies", "must be 1 or 4")
            perron = {"depths": list(depths), "delta": pdelta, "copies": copies}
        circle_cells = _number_list(d, "circle_cells", int)
        if any(n < 2 for n in circle_cells):
            raise ConfigError("circle_cells", "need at least 2 cells")
        for delta in deltas:
            _check_grid(recipe, delta, cpd)
        resolved = {**d, "recipe": recipe_raw, "perron": perron}
        return cls(recipe, s, t, tuple(deltas), lambdas, directions, pairs, seed, cpd, arcs, oracle,
                   perron, tuple(circle_cells), resolved)

    def with_overrides(self, **kw) -> "ExperimentConfig":
        raw = dict(self.resolved)
        raw.update({k: v for k, v in kw.items() if v is not None})
        return ExperimentConfig.from_dict(raw)


def _check_grid(recipe, delta: float, cpd: int) -> None:
    h = delta / cpd
    if isinstance(recipe, Custom):
        return
    n = 1.0 / h
    if abs(n - round(n)) > 1e-9 * n:
        raise ConfigError("deltas", f"delta={delta:g}: cell size delta/{cpd} must divide 1 (use delta = 2^-k)")


# --- reports -------------------------------------------------------------------------

@dataclass
class Table:
    columns: list[str]
    rows: list[list]


@dataclass
class ExperimentReport:
    name: str
    config: ExperimentConfig
    tables: dict[str, Table] = field(default_factory=dict)
    fits: dict[str, dict] = field(default_factory=dict)
    flags: dict[str, bool] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    figures: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.flags.values())

    def to_dict(self) -> dict:
        return _clean({
            "experiment": self.name,
            "version": __version__,
            "config_hash": self.config.hash,
            "config": self.config.resolved,
            "fits": self.fits,
            "flags": self.flags,
            "passed": self.passed,
            "notes": self.notes,
            "tables": {k: {"columns": t.columns, "rows": len(t.rows)} for k, t in self.tables.items()},
        })

    def outputs(self) -> dict[str, bytes]:
        """File name -> content for every artefact of the report."""
        out = {f"{self.name}_{k}.csv": csv_bytes(t.columns, t.rows) for k, t in self.tables.items()}
        out.update({f"{self.name}_{k}.svg": svg.encode() for k, svg in self.figures.items()})
        out[f"{self.name}_report.json"] = canonical_json(self.to_dict()).encode()
        return out


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def fit_slope(x: Sequence[float], y: Sequence[float]) -> dict:
    """Least-squares slope with a 95% confidence interval (None when undetermined)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if len(x) < 2 or np.ptp(x) == 0:
        return {"slope": None, "intercept": None, "ci95": None, "points": int(len(x))}
    res = stats.linregress(x, y)
    ci = None
    if len(x) > 2:
        half = float(stats.t.ppf(0.975, len(x) - 2) * res.stderr)
        ci = [res.slope - half, res.slope + half]
    return {"slope": float(res.slope), "intercept": float(res.intercept), "ci95": ci, "points": int(len(x))}


def pmap(fn: Callable, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map, optionally on a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --- shared pipeline pieces ---------------------------------------------------------------

def grid_step(recipe, delta: float, cells_per_delta: int) -> float:
    """delta / cells_per_delta, halved until it resolves the recipe's smallest feature."""
    h = delta / cells_per_delta
    need = recipe.min_feature()
    while h > need * (1 + 1e-9):
        h /= 2
    return h


@dataclass
class Scale:
    delta: float
    K: RasterSet
    K_delta: RasterSet


def build_scale(recipe, delta: float, cells_per_delta: int) -> Scale:
    if isinstance(recipe, Custom):
        K = generate(recipe, _custom_grid(recipe))
        if K.grid.h > delta / 4 * (1 + 1e-9):
            raise ConfigError("deltas", f"delta={delta:g} needs raster cells of at most delta/4")
        return Scale(delta, K, neighborhood(K, delta))
    h = grid_step(recipe, delta, cells_per_delta)
    grid = grid_for(recipe, h, margin=delta + 2 * h)
    K = generate(recipe, grid)
    return Scale(delta, K, neighborhood(K, delta))


def _custom_grid(recipe: Custom) -> GridSpec:
    from .formats import read_raster

    return read_raster(recipe.path).grid


def pipeline_measure(family, K_delta: RasterSet, delta: float, s: float) -> TubeRectMeasure:
    """Frostman measure on the projected segment set, discretised and lifted into K(delta)."""
    e, intervals = family
    nu_tilde = frostman_build_1d(projected_grid_set(intervals, delta), s)
    return lift_to_rectangles(discretize_frostman(nu_tilde, delta), K_delta, e, s)


def _families(cfg: ExperimentConfig, need: int) -> list:
    fams = segment_families(cfg.recipe)
    if len(fams) < need:
        raise ConfigError("recipe", f"needs at least {need} declared segment famil{'y' if need == 1 else 'ies'} "
                                    "(cantor_product or union_rotations of one)")
    return fams


def _lift_all(fams, scale: Scale, s: float, threads: int):
    def work(fam):
        try:
            return pipeline_measure(fam, scale.K_delta, scale.delta, s)
        except LiftError as exc:
            return exc
    return pmap(work, fams, threads)


def _sigma_cells(cfg: ExperimentConfig) -> list[int]:
    angles = sweep_angles(cfg.directions)
    if cfg.sigma_arcs is None:
        return list(range(cfg.directions))
    return [k for k, a in enumerate(angles) if any(lo <= a <= hi for lo, hi in cfg.sigma_arcs)]


# --- experiments -------------------------------------------------------------------------------

def exp_weak_type(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("weaktype", cfg)
    cells = _sigma_cells(cfg)
    if not cells:
        raise ConfigError("sigma_arcs", "no sweep direction falls inside the given arcs")
    sigma = circle_frostman(cells, cfg.directions, cfg.t)
    angles = sweep_angles(cfg.directions)
    level_rows, summary, sweep_rows = [], [], []
    sups = []
    for delta in cfg.deltas:
        B = build_scale(cfg.recipe, delta, cfg.cells_per_delta).K
        area = B.area
        M = np.array([r.value for r in direction_sweep(B, delta, cfg.s, cfg.directions, threads)])
        sweep_rows += [[delta, a, m] for a, m in zip(angles, M)]

        def q_of(lam: float) -> tuple[float, float]:
            level = float(sigma.masses[M >= lam].sum())
            return level, (lam * lam * level / area if area > 0 else 0.0)

        for lam in cfg.lambdas or ():
            level, q = q_of(lam)
            level_rows.append([delta, lam, level, q])
        # the supremum over lambda is attained at one of the sampled values
        cands = sorted({float(m) for m in M if m > 0})
        best_q, best_lam = 0.0, 0.0
        for lam in cands:
            q = q_of(lam)[1]
            if q > best_q:
                best_q, best_lam = q, lam
        sups.append(best_q)
        summary.append([delta, area, best_q, best_lam, float(M.min()), float(M.max())])
        rep.figures[f"sweep_{_tag(delta)}"] = render_strip_svg(angles, M)
    rep.tables["summary"] = Table(["delta", "area", "sup_Q", "argmax_lambda", "M_min", "M_max"], summary)
    rep.tables["levels"] = Table(["delta", "lambda", "sigma_level_set", "Q"], level_rows)
    rep.tables["sweep"] = Table(["delta", "angle", "M"], sweep_rows)
    pos = [(d, q) for d, q in zip(cfg.deltas, sups) if q > 0]
    fit = fit_slope([math.log(1 / d) for d, _ in pos], [math.log(q) for _, q in pos])
    rep.fits["sup_Q_vs_log_inv_delta"] = fit
    spread = (max(sups) / min(sups) - 1) if min(sups) > 0 else (0.0 if max(sups) == 0 else math.inf)
    rep.fits["sup_Q_spread"] = {"relative_spread": spread, "sigma_total": sigma.total}
    rep.flags["weak_type_uniformity"] = spread <= WEAK_TYPE_SPREAD
    slope = fit["slope"] if fit["slope"] is not None else 0.0
    rep.flags["weak_type_delta_trend"] = abs(slope) <= WEAK_TYPE_SLOPE
    return rep


def _envelope_slope(x: np.ndarray, y: np.ndarray, bins: int = 8) -> dict:
    """Slope of the upper envelope of log y against log x (max per log-spaced bin)."""
    keep = (x > 0) & (y > 0)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if len(lx) < 2 or np.ptp(lx) == 0:
        return fit_slope([], [])
    edges = np.linspace(lx.min(), lx.max(), bins + 1)
    idx = np.clip(np.searchsorted(edges, lx, side="right") - 1, 0, bins - 1)
    px, py = [], []
    for b in range(bins):
        sel = np.flatnonzero(idx == b)
        if len(sel):
            k = sel[np.argmax(ly[sel])]
            px.append(lx[k])
            py.append(ly[k])
    return fit_slope(px, py)


def exp_correlation(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("correlation", cfg)
    fams = _families(cfg, 2)
    all_pairs = list(itertools.combinations(range(len(fams)), 2))
    rng = np.random.default_rng(cfg.seed)
    if len(all_pairs) > cfg.pairs:
        pick = np.sort(rng.choice(len(all_pairs), size=cfg.pairs, replace=False))
        all_pairs = [all_pairs[i] for i in pick]
    rows, summary, oracle_rows = [], [], []
    per_delta_max, oracle_err, slopes = [], [], []
    excluded_total = 0
    for delta in cfg.deltas:
        scale = build_scale(cfg.recipe, delta, cfg.cells_per_delta)
        measures = _lift_all(fams, scale, cfg.s, threads)
        ok = [p for p in all_pairs if not any(isinstance(measures[i], LiftError) for i in p)]
        excluded = len(all_pairs) - len(ok)
        excluded_total += excluded

        def work(pair):
            i, j = pair
            return correlation(measures[i], measures[j])

        corr = np.array(pmap(work, ok, threads))
        gaps = np.array([float(angle_chord(fams[i][0].angle - fams[j][0].angle)) for i, j in ok])
        ratio = corr * (gaps + delta) ** (1 - cfg.s)
        rows += [[delta, i, j, g, c, r] for (i, j), g, c, r in zip(ok, gaps, corr, ratio)]
        env = _envelope_slope(gaps + delta, corr)
        slopes.append(env["slope"])
        top = float(ratio.max()) if len(ratio) else 0.0
        per_delta_max.append(top)
        summary.append([delta, len(ok), excluded, top, env["slope"]])
        # independent raster oracle on the strongest pairs
        strongest = [ok[k] for k in np.argsort(-corr, kind="stable")[: cfg.oracle_pairs]]
        g = scale.K_delta.grid
        x0, y0, x1, y1 = g.extent
        oracle_grid = GridSpec.covering((x0, y0), (x1, y1), min(g.h, ORACLE_STEP))
        for i, j in strongest:
            exact = correlation(measures[i], measures[j])
            approx = correlation_raster(measures[i], measures[j], oracle_grid)
            err = abs(approx - exact) / exact if exact > 0 else (0.0 if approx == 0 else math.inf)
            oracle_err.append(err)
            oracle_rows.append([delta, i, j, exact, approx, err])
        if delta == min(cfg.deltas):
            rep.figures["scatter"] = render_scatter_svg(gaps + delta, corr)
            if len(ok):
                i, j = ok[int(np.argmax(corr))]
                rep.figures["overlay"] = render_measures_svg([measures[i], measures[j]])
    rep.tables["pairs"] = Table(["delta", "i", "j", "gap", "correlation", "scaled"], rows)
    rep.tables["summary"] = Table(["delta", "pairs", "excluded", "max_scaled", "envelope_slope"], summary)
    rep.tables["oracle"] = Table(["delta", "i", "j", "exact", "raster", "relative_error"], oracle_rows)
    spread = max(per_delta_max) / min(per_delta_max) if min(per_delta_max) > 0 else math.inf
    rep.fits["envelope_slopes"] = {"per_delta": slopes, "bound_exponent": cfg.s - 1}
    rep.fits["max_scaled"] = {"per_delta": per_delta_max, "spread": spread}
    rep.fits["oracle"] = {"max_relative_error": max(oracle_err) if oracle_err else 0.0, "checked": len(oracle_err)}
    rep.fits["excluded_pairs"] = {"total": excluded_total}
    rep.flags["correlation_delta_uniform"] = spread <= CORRELATION_SPREAD
    rep.flags["correlation_envelope_slope"] = all(
        sl is not None and sl >= cfg.s - 1 - CORRELATION_SLOPE_SLACK for sl in slopes)
    rep.flags["correlation_oracle"] = all(e <= ORACLE_RTOL for e in oracle_err)
    return rep


def exp_dichotomy(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("dichotomy", cfg)
    areas = pmap(lambda d: build_scale(cfg.recipe, d, cfg.cells_per_delta).K_delta.area, list(cfg.deltas), threads)
    finest = areas[int(np.argmin(cfg.deltas))]
    dev = max(abs(a / finest - 1) for a in areas) if finest > 0 else math.inf
    rep.tables["multiline"] = Table(["delta", "area_K_delta", "relative_to_finest"],
                                    [[d, a, a / finest if finest > 0 else None] for d, a in zip(cfg.deltas, areas)])
    rep.fits["multiline"] = {"max_deviation": dev, "finest_area": finest}
    rep.flags["multiline_area_stable"] = dev <= MULTILINE_BAND
    base = cfg.recipe.base if isinstance(cfg.recipe, UnionRotations) else cfg.recipe
    if isinstance(base, CantorProduct):
        rep.notes.append(
            f"segment set dimension {base.dimension:.6g}; the direction set must have dimension "
            f"> 1 - s = {1 - base.dimension:.6g}; a finite angle list only approximates this at scale delta")
    if cfg.perron is not None:
        p = cfg.perron
        depths = p["depths"]
        h = p["delta"] / cfg.cells_per_delta
        exact = perron_area_trend(depths, copies=p["copies"])
        thick = pmap(lambda k: perron_area_trend([k], delta=p["delta"], h=h, copies=p["copies"])[0], depths, threads)
        rep.tables["perron"] = Table(["depth", "area", "area_K_delta"], [list(r) for r in zip(depths, exact, thick)])
        drop = 1 - thick[-1] / thick[0]
        rep.fits["perron"] = {"relative_decrease": drop, "delta": p["delta"],
                              "log_area_vs_log_depth": fit_slope(
                                  [math.log(k) for k in depths if k > 0],
                                  [math.log(a) for k, a in zip(depths, exact) if k > 0])}
        rep.flags["perron_area_decrease"] = drop >= PERRON_DECREASE
    return rep


def exp_lower_bound_chain(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("chain", cfg)
    fams = _families(cfg, 1)
    rows, sig, area_list, fail_frac = [], [], [], []
    angles = sweep_angles(cfg.directions)
    for delta in cfg.deltas:
        scale = build_scale(cfg.recipe, delta, cfg.cells_per_delta)
        measures = _lift_all(fams, scale, cfg.s, threads)
        good = [m for m in measures if not isinstance(m, LiftError)]
        failed = len(measures) - len(good)
        fail_frac.append(failed / len(measures))
        m = min(mu.mass for mu in good) if good else 0.0
        M = np.array([r.value for r in direction_sweep(scale.K_delta, delta, cfg.s, cfg.directions, threads)])
        E = [k for k in range(cfg.directions) if M[k] > m / 2] if m > 0 else []
        sigma_E = circle_frostman(E, cfg.directions, cfg.t).total if E else 0.0
        area = scale.K_delta.area
        sig.append(sigma_E)
        area_list.append(area)
        rows.append([delta, m, len(E), sigma_E, area, failed])
        rep.figures[f"sweep_{_tag(delta)}"] = render_strip_svg(angles, M)
    rep.tables["chain"] = Table(["delta", "min_mass", "E_delta_cells", "sigma_E_delta", "area_K_delta",
                                 "lift_failures"], rows)
    ref_s, ref_a = sig[0], area_list[0]
    rep.fits["chain"] = {"sigma_ratio_to_first": [x / ref_s if ref_s > 0 else None for x in sig],
                         "area_ratio_to_first": [a / ref_a if ref_a > 0 else None for a in area_list]}
    rep.notes.append("threshold for E^delta is m/2 with m the smallest lifted mass; m, sigma(E^delta) and "
                     "area(K(delta)) are reported separately")
    rep.flags["chain_sigma_stable"] = ref_s > 0 and all(x >= CHAIN_STABILITY * ref_s for x in sig)
    rep.flags["chain_area_stable"] = ref_a > 0 and all(a >= CHAIN_STABILITY * ref_a for a in area_list)
    rep.flags["chain_lift_failures"] = all(f <= LIFT_FAILURE_LIMIT for f in fail_frac)
    return rep


def exp_frostman(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("frostman", cfg)
    fams = _families(cfg, 1)
    rows = []
    ok_mass, ok_growth = True, True
    for delta in cfg.deltas:
        for k, (e, iv) in enumerate(fams):
            cells = projected_grid_set(iv, delta)
            mu = frostman_build_1d(cells, cfg.s)
            r = frostman_report(cells, mu, cfg.s)
            rows.append([delta, k, e.angle, len(cells.occupied), r["mass"], r["content"],
                         r["dyadic_ratio"], r["growth_ratio"]])
            ok_mass &= r["mass"] >= FROSTMAN_MASS_FRACTION * r["content"]
            ok_growth &= r["growth_ratio"] <= FROSTMAN_SLACK
    rep.tables["line"] = Table(["delta", "family", "angle", "cells", "mass", "content", "dyadic_ratio",
                                "growth_ratio"], rows)
    riesz = []
    for n in cfg.circle_cells:
        sigma = circle_frostman(range(n), n, cfg.t)
        riesz.append([n, sigma.total, riesz_integral(sigma, cfg.s)])
    rep.tables["circle"] = Table(["cells", "sigma_total", "riesz_integral"], riesz)
    vals = [r[2] for r in riesz]
    spread = max(vals) / min(vals)
    rep.fits["riesz"] = {"spread": spread}
    rep.flags["frostman_mass"] = bool(ok_mass)
    rep.flags["frostman_growth"] = bool(ok_growth)
    rep.flags["riesz_bounded"] = spread <= RIESZ_SPREAD
    return rep


def exp_maximal(cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    rep = ExperimentReport("maximal", cfg)
    rows = []
    bounded = True
    for delta in cfg.deltas:
        K = build_scale(cfg.recipe, delta, cfg.cells_per_delta).K
        res = direction_sweep(K, delta, cfg.s, cfg.directions, threads)
        for r in res:
            rows.append([delta, r.direction.angle, r.value, r.mass, r.diagnostics["binding_length"]])
            bounded &= r.value <= 1 + 1e-9 and r.mass <= 1 + 1e-9
        rep.figures[f"strip_{_tag(delta)}"] = render_strip_svg([r.direction.angle for r in res],
                                                                    [r.value for r in res])
    rep.tables["sweep"] = Table(["delta", "angle", "value", "mass", "binding_length"], rows)
    rep.flags["maximal_bounded"] = bool(bounded)
    return rep


def _tag(delta: float) -> str:
    """File-name tag: ``k5`` for delta = 2^-5, else the decimal with ``p`` for the point."""
    k = -math.log2(delta)
    return f"k{round(k)}" if abs(k - round(k)) < 1e-9 else f"{delta:g}".replace(".", "p")


RUNNERS = {
    "maximal": exp_maximal,
    "correlation": exp_correlation,
    "weaktype": exp_weak_type,
    "dichotomy": exp_dichotomy,
    "chain": exp_lower_bound_chain,
    "frostman": exp_frostman,
}


def run_experiment(name: str, cfg: ExperimentConfig, threads: int = 1) -> ExperimentReport:
    return RUNNERS[name](cfg, threads)
