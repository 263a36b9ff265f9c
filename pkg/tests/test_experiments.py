import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kakeya_lab.experiments import (
    FROSTMAN_MASS_FRACTION,
    ConfigError,
    ExperimentConfig,
    _envelope_slope,
    _tag,
    exp_correlation,
    exp_dichotomy,
    exp_frostman,
    exp_lower_bound_chain,
    exp_maximal,
    exp_weak_type,
    fit_slope,
    grid_step,
    pmap,
)
from kakeya_lab.formats import write_raster
from kakeya_lab.geometry import GridSpec, RasterSet
from kakeya_lab.testsets import CantorProduct

DISC = {"recipe": {"kind": "disc", "radius": 0.5}, "s": 0.5, "t": 0.0,
        "deltas": [0.125, 0.0625], "directions": 8}


def cfg(**kw):
    return ExperimentConfig.from_dict({**DISC, **kw})


def table(rep, name):
    t = rep.tables[name]
    return [dict(zip(t.columns, r)) for r in t.rows]


class TestConfig:
    def test_defaults_are_recorded(self):
        c = cfg()
        assert c.directions == 8 and c.pairs == 200 and c.cells_per_delta == 4
        assert c.resolved["oracle_pairs"] == 8

    @pytest.mark.parametrize("patch,key", [
        ({"t": 0.5}, "t"),
        ({"t": 0.7}, "t"),
        ({"s": 0.0}, "s"),
        ({"s": "half"}, "s"),
        ({"deltas": [0.5, 1.5]}, "deltas"),
        ({"deltas": []}, "deltas"),
        ({"deltas": [0.3]}, "deltas"),
        ({"cells_per_delta": 6}, "cells_per_delta"),
        ({"directions": 1}, "directions"),
        ({"lambdas": [0.0]}, "lambdas"),
        ({"sigma_arcs": [[0.1]]}, "sigma_arcs"),
        ({"perron": {"depths": [2], "delta": 0.1, "size": 3}}, "perron.size"),
        ({"perron": {"depths": [2]}}, "perron.delta"),
        ({"recipe": {"kind": "blob"}}, "recipe"),
        ({"extra": 1}, "extra"),
    ])
    def test_rejected(self, patch, key):
        with pytest.raises(ConfigError) as info:
            cfg(**patch)
        assert info.value.key == key

    def test_t_message(self):
        with pytest.raises(ConfigError, match="t < s"):
            cfg(t=0.5)

    def test_missing_required(self):
        raw = {k: v for k, v in DISC.items() if k != "recipe"}
        with pytest.raises(ConfigError) as info:
            ExperimentConfig.from_dict(raw)
        assert info.value.key == "recipe"

    def test_random_angles_resolved_from_seed(self):
        recipe = {"kind": "union_rotations", "base": {"kind": "cantor_product", "ratio": 0.25, "depth": 2},
                  "n_random_angles": 5}
        a = cfg(recipe=recipe, seed=3)
        b = cfg(recipe=recipe, seed=3)
        c = cfg(recipe=recipe, seed=4)
        assert a.resolved["recipe"]["angles"] == b.resolved["recipe"]["angles"]
        assert a.resolved["recipe"]["angles"] != c.resolved["recipe"]["angles"]
        assert a.hash == b.hash != c.hash
        assert all(0 <= x < math.pi for x in a.resolved["recipe"]["angles"])

    def test_with_overrides(self):
        c = cfg().with_overrides(s=0.7, directions=None)
        assert c.s == 0.7 and c.directions == 8


class TestHelpers:
    def test_fit_slope_exact(self):
        x = np.arange(5.0)
        fit = fit_slope(x, 3 * x - 1)
        assert fit["slope"] == pytest.approx(3) and fit["intercept"] == pytest.approx(-1)
        assert fit["ci95"] == pytest.approx([3, 3])

    def test_fit_slope_degenerate(self):
        assert fit_slope([1.0], [2.0])["slope"] is None
        assert fit_slope([1.0, 2.0], [0.0, 1.0])["ci95"] is None

    @settings(max_examples=20)
    @given(st.lists(st.integers(), max_size=30), st.integers(1, 4))
    def test_pmap_keeps_order(self, items, threads):
        assert pmap(lambda x: 2 * x, items, threads) == [2 * x for x in items]

    @settings(max_examples=30)
    @given(st.floats(-1.5, 0.5), st.floats(0.1, 3.0))
    def test_envelope_recovers_power_law(self, p, c):
        x = np.geomspace(0.01, 1.0, 200)
        rng = np.random.default_rng(0)
        # points below the curve never raise the envelope
        y = np.concatenate([c * x**p, c * x**p * rng.uniform(0.1, 0.9, len(x))])
        fit = _envelope_slope(np.concatenate([x, x]), y)
        assert fit["slope"] == pytest.approx(p, abs=1e-9)

    def test_tag(self):
        assert _tag(2.0**-5) == "k5"
        assert _tag(0.3) == "0p3"

    def test_grid_step_refines_for_fine_features(self):
        assert grid_step(CantorProduct(1 / 3, 5), 1 / 8, 4) <= (1 / 3) ** 5
        assert grid_step(CantorProduct(0.25, 1), 1 / 8, 4) == 1 / 32


class TestWeakType:
    def test_levels_nonincreasing_in_lambda(self):
        lams = [0.05, 0.2, 0.4, 0.6, 0.8, 0.95, 1.5]
        rep = exp_weak_type(cfg(lambdas=lams))
        rows = table(rep, "levels")
        for delta in DISC["deltas"]:
            levels = [r["sigma_level_set"] for r in rows if r["delta"] == delta]
            assert all(b <= a + 1e-15 for a, b in zip(levels, levels[1:]))
            # M never exceeds the sup of the indicator
            assert [r["Q"] for r in rows if r["delta"] == delta][-1] == 0.0

    def test_sup_is_attained_on_the_sampled_values(self):
        rep = exp_weak_type(cfg())
        sweep = table(rep, "sweep")
        for row in table(rep, "summary"):
            M = np.array([r["M"] for r in sweep if r["delta"] == row["delta"]])
            sigma_cell = rep.fits["sup_Q_spread"]["sigma_total"] / len(M)
            grid = np.linspace(1e-3, 1.0, 2000)
            brute = max(l * l * sigma_cell * np.count_nonzero(M >= l) / row["area"] for l in grid)
            assert brute <= row["sup_Q"] * (1 + 1e-12)

    def test_empty_set(self, tmp_path):
        g = GridSpec((0.0, 0.0), 1.0, 64)
        write_raster(tmp_path / "empty.pgm", RasterSet.empty(g))
        rep = exp_weak_type(cfg(recipe={"kind": "custom", "path": str(tmp_path / "empty.pgm")}))
        assert all(r["sup_Q"] == 0 for r in table(rep, "summary"))
        assert rep.passed

    def test_disc_is_uniform(self):
        rep = exp_weak_type(cfg(deltas=[0.0625, 0.03125], directions=16))
        assert rep.flags["weak_type_uniformity"]
        assert rep.fits["sup_Q_spread"]["relative_spread"] <= 0.05


class TestMaximalExperiment:
    def test_square_axis_values(self):
        rep = exp_maximal(cfg(recipe={"kind": "square", "side": 1.0}, directions=4))
        rows = table(rep, "sweep")
        axis = [r["value"] for r in rows if r["angle"] in (0.0, math.pi / 2)]
        assert axis == pytest.approx([1.0] * len(axis))
        assert rep.passed


CANTOR_UNION = {"kind": "union_rotations",
                "base": {"kind": "cantor_product", "ratio": 0.25, "depth": 2}, "n_angles": 6}


class TestChain:
    def test_needs_segment_family(self):
        with pytest.raises(ConfigError, match="segment famil"):
            exp_lower_bound_chain(cfg(recipe={"kind": "square", "side": 1.0}))

    def test_bookkeeping(self):
        c = cfg(recipe=CANTOR_UNION, deltas=[0.0625, 0.03125], directions=16, s=0.5, t=0.2)
        rep = exp_lower_bound_chain(c)
        for r in table(rep, "chain"):
            # lifted measures carry a tenth of a Frostman mass, itself at most the content
            assert 0 < r["min_mass"] <= 0.1 + 1e-12
            assert 0 <= r["E_delta_cells"] <= 16
            assert 0 <= r["sigma_E_delta"]
            assert r["lift_failures"] == 0
        assert rep.passed


class TestFrostmanExperiment:
    def test_cantor(self):
        c = cfg(recipe={"kind": "cantor_product", "ratio": 1 / 3, "depth": 4},
                s=math.log(2) / math.log(3), t=0.3, deltas=[3.0**-4],
                circle_cells=[16, 64])
        rep = exp_frostman(c)
        (row,) = table(rep, "line")
        assert row["cells"] == 16
        assert row["mass"] >= FROSTMAN_MASS_FRACTION * row["content"]
        assert rep.passed


class TestDichotomy:
    def test_tables_and_note(self):
        c = cfg(recipe=CANTOR_UNION, deltas=[0.0625, 0.03125], s=0.5, t=0.2,
                perron={"depths": [2, 3], "delta": 0.0625})
        rep = exp_dichotomy(c)
        assert [r["delta"] for r in table(rep, "multiline")] == [0.0625, 0.03125]
        assert table(rep, "multiline")[-1]["relative_to_finest"] == 1.0
        perron = table(rep, "perron")
        assert perron[0]["area"] == pytest.approx(0.25)
        assert all(r["area_K_delta"] > r["area"] for r in perron)
        assert any("dimension" in n for n in rep.notes)


class TestCorrelationExperiment:
    def test_pairs_and_oracle(self):
        c = cfg(recipe=CANTOR_UNION, deltas=[0.0625, 0.03125], s=0.5, t=0.2, pairs=5, oracle_pairs=2)
        rep = exp_correlation(c)
        rows = table(rep, "pairs")
        for delta in (0.0625, 0.03125):
            assert len([r for r in rows if r["delta"] == delta]) == 5
        for r in rows:
            assert r["scaled"] == pytest.approx(r["correlation"] * (r["gap"] + r["delta"]) ** 0.5)
        assert all(r["relative_error"] <= 0.02 for r in table(rep, "oracle"))
        assert "overlay" in rep.figures and "scatter" in rep.figures

    def test_needs_two_families(self):
        with pytest.raises(ConfigError):
            exp_correlation(cfg(recipe={"kind": "cantor_product", "ratio": 0.25, "depth": 2}))
