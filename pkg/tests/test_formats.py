import csv
import io
import json
import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kakeya_lab.formats import (
    FormatError,
    canonical_json,
    config_hash,
    csv_bytes,
    parse_pgm,
    raster_bytes,
    read_csv,
    read_raster,
    read_tube_measure,
    render_files,
    render_measures_svg,
    write_raster,
    write_step_measure,
    write_tube_measure,
)
from kakeya_lab.frostman import StepMeasure1D
from kakeya_lab.geometry import Direction, GridSpec, RasterSet
from kakeya_lab.testsets import Disc, generate

GOLDEN = Path(__file__).parent / "golden"
SVG = "{http://www.w3.org/2000/svg}"


def load_golden():
    import importlib.util
    spec = importlib.util.spec_from_file_location("regenerate", GOLDEN / "regenerate.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


class TestCsv:
    def test_rfc4180_line_endings_and_quoting(self):
        data = csv_bytes(["a", "b"], [[1, 'x,"y"'], [0.1, None]])
        assert data == b'a,b\r\n1,"x,""y"""\r\n0.1,\r\n'

    @settings(max_examples=60)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=10))
    def test_floats_round_trip(self, values):
        data = csv_bytes(["v"], [[v] for v in values])
        rows = list(csv.reader(io.StringIO(data.decode())))
        assert [float(r[0]) for r in rows[1:]] == values

    def test_read_empty_file(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_bytes(b"")
        with pytest.raises(FormatError, match="header"):
            read_csv(p)

    def test_canonical_json_sorted(self):
        assert canonical_json({"b": 1, "a": [1.5]}) == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})


class TestMeasureFiles:
    def test_tube_measure_round_trip(self, tmp_path):
        from kakeya_lab.tube_measures import TubeRectMeasure
        mu = TubeRectMeasure(Direction(0.7), 1 / 16, 0.5, {-2: (-0.3, 0.25), 5: (0.1, 0.5)})
        write_tube_measure(tmp_path / "m.csv", mu)
        back = read_tube_measure(tmp_path / "m.csv")
        assert back.entries == mu.entries
        assert back.direction.angle == mu.direction.angle and back.delta == mu.delta and back.s == mu.s

    def test_header_only_without_metadata_is_empty(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_bytes(b"j,offset,weight\r\n")
        assert read_tube_measure(p) is None

    def test_rows_without_metadata(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_bytes(b"j,offset,weight\r\n1,0,0.5\r\n")
        with pytest.raises(FormatError, match="metadata"):
            read_tube_measure(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_bytes(b"a,b\r\n1,2\r\n")
        with pytest.raises(FormatError, match="header"):
            read_tube_measure(p)

    def test_step_measure_columns(self, tmp_path):
        write_step_measure(tmp_path / "s.csv", StepMeasure1D(0.25, -1, np.array([0.5, 0.0, 0.25])))
        header, rows = read_csv(tmp_path / "s.csv")
        assert header == ["index", "mass"]
        assert rows == [["-1", "0.5"], ["0", "0.0"], ["1", "0.25"]]


class TestPgm:
    def test_header_and_orientation(self):
        g = GridSpec((0, 0), 1, 4)
        cov = np.zeros((4, 4))
        cov[0, 0] = 1.0  # bottom-left cell
        data = raster_bytes(RasterSet(g, cov))
        assert data.startswith(b"P5\n4 4\n65535\n")
        img = parse_pgm(data)
        # the image is stored top row first
        assert img[3, 0] == 1.0 and img.sum() == 1.0

    def test_round_trip(self, tmp_path):
        K = generate(Disc(0.4), GridSpec((0, 0), 1, 48))
        write_raster(tmp_path / "d.pgm", K, {"kind": "disc", "radius": 0.4})
        back = read_raster(tmp_path / "d.pgm")
        assert back.grid == K.grid
        assert np.abs(back.coverage - K.coverage).max() <= 0.5 / 65535 + 1e-15
        meta = json.loads((tmp_path / "d.pgm.json").read_text())
        assert meta["recipe"]["radius"] == 0.4

    @pytest.mark.parametrize("data,msg", [
        (b"P2\n1 1\n255\n\x00", "magic"),
        (b"P5\n2 2\n65535\n\x00\x00", "payload"),
        (b"P5\nx 2\n65535\n", "non-integer"),
        (b"P5\n2", "truncated"),
    ])
    def test_malformed(self, data, msg):
        with pytest.raises(FormatError, match=msg):
            parse_pgm(data)

    def test_missing_sidecar(self, tmp_path):
        p = tmp_path / "x.pgm"
        p.write_bytes(raster_bytes(RasterSet.empty(GridSpec((0, 0), 1, 4))))
        with pytest.raises(FormatError, match="sidecar"):
            read_raster(p)


def path_area(d: str) -> float:
    """Area of a path made of 'M x y h w v h h -w z' run rectangles."""
    total = 0.0
    for m in re.finditer(r"M(\S+) (\S+)h(\S+)v(\S+)h(\S+)z", d):
        total += float(m.group(3)) * float(m.group(4))
    return total


class TestSvg:
    def test_disc_golden(self):
        svg = render_files([GOLDEN / "disc.pgm"])
        assert svg == (GOLDEN / "disc.svg").read_text()

    def test_disc_structure(self):
        K = load_golden().disc_raster()
        root = ET.fromstring(render_files([GOLDEN / "disc.pgm"]))
        x0, y0, x1, y1 = K.grid.extent
        assert [float(v) for v in root.get("viewBox").split()] == [x0, y0, x1 - x0, y1 - y0]
        groups = root.findall(f".//{SVG}g[@id='raster']")
        assert len(groups) == 1
        paths = groups[0].findall(f"{SVG}path")
        assert len(paths) == 1
        # the path covers exactly the cells with coverage >= 1/2
        stored = read_raster(GOLDEN / "disc.pgm")
        want = np.count_nonzero(stored.coverage >= 0.5) * K.grid.h**2
        assert path_area(paths[0].get("d")) == pytest.approx(want, rel=1e-9)

    def test_overlay_golden(self):
        svg = render_files([GOLDEN / "first.csv", GOLDEN / "second.csv"])
        assert svg == (GOLDEN / "overlay.svg").read_text()

    def test_overlay_structure(self):
        first, second = load_golden().overlay_measures()
        root = ET.fromstring(render_measures_svg([first, second]))
        for k, mu in enumerate((first, second)):
            g = root.find(f".//{SVG}g[@id='measure-{k}']")
            assert len(g.findall(f"{SVG}path")) == len(mu.entries)
        tube = root.find(f".//{SVG}g[@id='tube']")
        assert tube is not None and tube.get("stroke-dasharray")
        # the outlined tube is the heaviest one of the second measure, drawn as a slab
        pts = [tuple(map(float, p.split())) for p in tube.find(f"{SVG}path").get("d")[1:-1].split("L")]
        e = np.array(second.direction.e)
        proj = [np.dot(e, p) for p in pts]
        assert min(proj) == pytest.approx(4 * second.delta, abs=1e-5)
        assert max(proj) == pytest.approx(5 * second.delta, abs=1e-5)

    def test_empty_measure_has_axes_only(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_bytes(b"j,offset,weight\r\n")
        root = ET.fromstring(render_files([p]))
        ids = [g.get("id") for g in root.iter(f"{SVG}g") if g.get("id")]
        assert ids == ["axes"]

    def test_svg_is_deterministic(self):
        a = render_files([GOLDEN / "first.csv", GOLDEN / "second.csv"])
        b = render_files([GOLDEN / "first.csv", GOLDEN / "second.csv"])
        assert a.encode() == b.encode()

    def test_numbers_are_fixed_precision(self):
        svg = (GOLDEN / "overlay.svg").read_text()
        for num in re.findall(r"-?\d+\.\d+", svg):
            assert len(num.split(".")[1]) <= 6
