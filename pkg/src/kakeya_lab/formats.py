"""On-disk formats: RFC-4180 CSV, 16-bit binary PGM with a JSON sidecar, SVG 1.1.

Every writer produces byte-identical output for identical input.  Floats are
written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .frostman import CircleMeasure, StepMeasure1D
from .geometry import Direction, GridSpec, RasterSet, clip_halfplane
from .tube_measures import TubeRectMeasure

PGM_MAXVAL = 65535


class FormatError(ValueError):
    """Malformed input file."""


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def config_hash(config: dict) -> str:
    return digest(json.dumps(config, sort_keys=True, separators=(",", ":")).encode())


# --- CSV -----------------------------------------------------------------------

def csv_bytes(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue().encode()


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    data = csv_bytes(header, rows)
    Path(path).write_bytes(data)
    return data


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty file, expected a header row")
    return rows[0], rows[1:]


def _float_rows(path, header, rows, expected) -> list[list[float]]:
    if header != expected:
        raise FormatError(f"{path}: header {header} does not match {expected}")
    try:
        return [[float(x) for x in r] for r in rows]
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _sidecar(path) -> Path:
    return Path(str(path) + ".json")


def write_step_measure(path, mu: StepMeasure1D) -> None:
    write_csv(path, ["index", "mass"], mu.csv_rows())
    _sidecar(path).write_text(canonical_json({"kind": "step_measure", "delta": mu.delta}))


def write_circle_measure(path, sigma: CircleMeasure) -> None:
    write_csv(path, ["index", "mass"], sigma.csv_rows())
    _sidecar(path).write_text(canonical_json(
        {"kind": "circle_measure", "n_cells": sigma.n_cells, "exponent": sigma.exponent}))


def write_tube_measure(path, mu: TubeRectMeasure) -> None:
    write_csv(path, ["j", "offset", "weight"], mu.csv_rows())
    _sidecar(path).write_text(canonical_json(
        {"kind": "tube_measure", "angle": mu.direction.angle, "delta": mu.delta, "s": mu.s}))


def read_tube_measure(path) -> TubeRectMeasure | None:
    """Load a measure CSV; a header-only file without metadata yields ``None``."""
    header, rows = read_csv(path)
    values = _float_rows(path, header, rows, ["j", "offset", "weight"])
    side = _sidecar(path)
    if not side.exists():
        if values:
            raise FormatError(f"{path}: missing metadata file {side}")
        return None
    try:
        meta = json.loads(side.read_text())
        entries = {int(j): (o, a) for j, o, a in values}
        return TubeRectMeasure(Direction(float(meta["angle"])), float(meta["delta"]), float(meta["s"]), entries)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad measure metadata ({exc})") from None


# --- PGM rasters -----------------------------------------------------------------

def raster_bytes(raster: RasterSet) -> bytes:
    """P5 image, 16-bit big-endian, top row first (largest y)."""
    n = raster.grid.cells_per_side
    q = np.rint(raster.coverage[::-1] * PGM_MAXVAL).astype(">u2")
    return f"P5\n{n} {n}\n{PGM_MAXVAL}\n".encode() + q.tobytes()


def write_raster(path, raster: RasterSet, recipe: dict | None = None) -> None:
    data = raster_bytes(raster)
    Path(path).write_bytes(data)
    g = raster.grid
    meta = {
        "grid": {"origin": list(g.origin), "side": g.side, "cells_per_side": g.cells_per_side},
        "recipe": recipe,
        "sha256": digest(data),
    }
    _sidecar(path).write_text(canonical_json(meta))


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and chr(data[pos]).isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not chr(data[pos]).isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1


def parse_pgm(data: bytes) -> np.ndarray:
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError("not a binary PGM (magic P5)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError("non-integer PGM header field") from None
    if w <= 0 or h <= 0 or not 0 < maxval <= PGM_MAXVAL:
        raise FormatError("invalid PGM dimensions or maxval")
    dtype = ">u2" if maxval > 255 else "u1"
    size = w * h * np.dtype(dtype).itemsize
    if len(data) - pos != size:
        raise FormatError(f"PGM payload has {len(data) - pos} bytes, expected {size}")
    return np.frombuffer(data[pos:], dtype=dtype).reshape(h, w).astype(float) / maxval


def read_raster(path) -> RasterSet:
    p = Path(path)
    data = p.read_bytes()
    img = parse_pgm(data)
    side = _sidecar(p)
    if not side.exists():
        raise FormatError(f"{path}: missing grid sidecar {side}")
    try:
        g = json.loads(side.read_text())["grid"]
        grid = GridSpec(tuple(g["origin"]), float(g["side"]), int(g["cells_per_side"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{side}: bad grid metadata ({exc})") from None
    if img.shape != grid.shape:
        raise FormatError(f"{path}: image shape {img.shape} does not match grid {grid.shape}")
    return RasterSet(grid, img[::-1].copy())


# --- SVG -------------------------------------------------------------------------

def _num(x: float) -> str:
    s = f"{x:.6f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _svg_open(x0, y0, w, h, width_px=480) -> list[str]:
    height_px = round(width_px * h / w) if w > 0 else width_px
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width_px}" height="{height_px}" '
        f'viewBox="{_num(x0)} {_num(y0)} {_num(w)} {_num(h)}">',
    ]


def _flip(y0, y1) -> str:
    """Group transform that turns the y-down SVG frame into a y-up plot frame."""
    return f'transform="matrix(1 0 0 -1 0 {_num(y0 + y1)})"'


def _axes(x0, y0, x1, y1) -> str:
    sw = _num((x1 - x0) / 400)
    return (
        f'<g id="axes" stroke="#444" stroke-width="{sw}" fill="none">'
        f'<path d="M{_num(x0)} {_num(y0)}H{_num(x1)}M{_num(x0)} {_num(y0)}V{_num(y1)}"/></g>'
    )


def render_raster_svg(raster: RasterSet, threshold: float = 0.5) -> str:
    """Cells with coverage >= threshold, merged into row runs, as one path."""
    g = raster.grid
    x0, y0, x1, y1 = g.extent
    h = g.h
    mask = raster.coverage >= threshold
    parts = []
    for iy in range(mask.shape[0]):
        row = mask[iy]
        if not row.any():
            continue
        edges = np.flatnonzero(np.diff(np.concatenate([[0], row.astype(np.int8), [0]])))
        for a, b in zip(edges[::2], edges[1::2]):
            parts.append(f"M{_num(x0 + a * h)} {_num(y0 + iy * h)}h{_num((b - a) * h)}v{_num(h)}h{_num(-(b - a) * h)}z")
    lines = _svg_open(x0, y0, x1 - x0, y1 - y0)
    lines.append(f"<g {_flip(y0, y1)}>")
    lines.append(f'<g id="raster" fill="#222" stroke="none"><path d="{"".join(parts)}"/></g>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


_PALETTE = ("#1f4e9c", "#c0392b", "#2e8b57", "#8e44ad", "#d35400")


def _measure_extent(measures: Sequence[TubeRectMeasure]):
    pts = [v for mu in measures for rect, _ in mu.items() for v in rect.vertices()]
    if not pts:
        return -0.1, -0.1, 1.1, 1.1
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    pad = 0.05 * max(max(xs) - min(xs), max(ys) - min(ys), 1e-9)
    return min(xs) - pad, min(ys) - pad, max(xs) + pad, max(ys) + pad


def _tube_polygon(mu: TubeRectMeasure, j: int, box) -> list:
    x0, y0, x1, y1 = box
    poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    e = np.asarray(mu.direction.e)
    poly = clip_halfplane(poly, -e, -j * mu.delta)
    return clip_halfplane(poly, e, (j + 1) * mu.delta)


def render_measures_svg(measures: Sequence[TubeRectMeasure]) -> str:
    """Overlay of tube measures; rectangles shaded by weight.

    When two or more measures are given, the heaviest tube of the last one is
    outlined, showing one tube crossing the rectangles of the others.
    """
    box = _measure_extent(measures)
    x0, y0, x1, y1 = box
    lines = _svg_open(x0, y0, x1 - x0, y1 - y0)
    lines.append(f"<g {_flip(y0, y1)}>")
    lines.append(_axes(x0, y0, x1, y1))
    sw = _num((x1 - x0) / 800)
    for k, mu in enumerate(measures):
        if not mu.entries:
            continue
        top = max(a for _, a in mu.entries.values()) or 1.0
        color = _PALETTE[k % len(_PALETTE)]
        lines.append(f'<g id="measure-{k}" fill="{color}" stroke="{color}" stroke-width="{sw}">')
        for rect, a in mu.items():
            d = "M" + "L".join(f"{_num(x)} {_num(y)}" for x, y in rect.vertices()) + "z"
            lines.append(f'<path d="{d}" fill-opacity="{_num(0.15 + 0.6 * a / top)}"/>')
        lines.append("</g>")
    if len(measures) >= 2 and measures[-1].entries:
        mu = measures[-1]
        j = min(mu.entries, key=lambda i: (-mu.entries[i][1], i))
        poly = _tube_polygon(mu, j, box)
        if len(poly) >= 3:
            d = "M" + "L".join(f"{_num(x)} {_num(y)}" for x, y in poly) + "z"
            lines.append(f'<g id="tube" fill="none" stroke="#000" stroke-width="{sw}" '
                         f'stroke-dasharray="{_num(4 * float(sw))}"><path d="{d}"/></g>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


def render_strip_svg(angles: Sequence[float], values: Sequence[float]) -> str:
    """Heat strip over [0, pi): one cell per direction, darker for larger values."""
    n = len(angles)
    lines = _svg_open(0, 0, math.pi, 0.2)
    lines.append('<g id="strip" stroke="none">')
    top = max(values) if n and max(values) > 0 else 1.0
    w = math.pi / max(n, 1)
    for a, v in zip(angles, values):
        shade = round(255 * (1 - v / top))
        lines.append(f'<rect x="{_num(a)}" y="0" width="{_num(w)}" height="0.2" '
                     f'fill="rgb({shade},{shade},{shade})"/>')
    lines += ["</g>", "</svg>"]
    return "\n".join(lines) + "\n"


def render_scatter_svg(xs: Sequence[float], ys: Sequence[float], logx=True, logy=True) -> str:
    """Log-log scatter plot with axes; non-positive points are dropped."""
    pts = [(x, y) for x, y in zip(xs, ys) if (x > 0 or not logx) and (y > 0 or not logy)]
    tx = (lambda v: math.log10(v)) if logx else float
    ty = (lambda v: math.log10(v)) if logy else float
    if pts:
        px = [tx(x) for x, _ in pts]
        py = [ty(y) for _, y in pts]
        x0, x1, y0, y1 = min(px), max(px), min(py), max(py)
    else:
        px, py, x0, x1, y0, y1 = [], [], 0.0, 1.0, 0.0, 1.0
    wx, wy = max(x1 - x0, 1e-9), max(y1 - y0, 1e-9)
    x0, x1, y0, y1 = x0 - 0.05 * wx, x1 + 0.05 * wx, y0 - 0.05 * wy, y1 + 0.05 * wy
    lines = _svg_open(0, 0, 1, 1)
    lines.append('<g transform="matrix(1 0 0 -1 0 1)">')
    lines.append(_axes(0, 0, 1, 1))
    lines.append('<g id="points" fill="#1f4e9c">')
    for a, b in zip(px, py):
        lines.append(f'<circle cx="{_num((a - x0) / (x1 - x0))}" cy="{_num((b - y0) / (y1 - y0))}" r="0.006"/>')
    lines += ["</g>", "</g>", "</svg>"]
    return "\n".join(lines) + "\n"


# --- render entry point -------------------------------------------------------------

def render_file(path) -> str:
    """SVG for a PGM raster or a tube-measure CSV, chosen by content."""
    p = Path(path)
    data = p.read_bytes()
    if data[:2] == b"P5":
        return render_raster_svg(read_raster(p))
    mu = read_tube_measure(p)
    return render_measures_svg([] if mu is None else [mu])


def render_files(paths: Sequence) -> str:
    if len(paths) == 1:
        return render_file(paths[0])
    measures = []
    for p in paths:
        mu = read_tube_measure(p)
        if mu is not None:
            measures.append(mu)
    return render_measures_svg(measures)
