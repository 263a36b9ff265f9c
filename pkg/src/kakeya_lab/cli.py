"""Command-line front end.

Exit codes: 0 when every criterion of the run passes, 1 when one fails, 2 for
configuration or input-format errors and 3 for file-system errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, run_experiment
from .formats import FormatError, canonical_json, config_hash, digest, render_files
from .testsets import FeatureSizeError

EXIT_OK, EXIT_FAIL, EXIT_SCHEMA, EXIT_IO = 0, 1, 2, 3
OUT_ENV = "KAKEYA_LAB_OUT"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kakeya-lab", description="Discretised Kakeya experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default="kakeya_out", help=f"output directory (overridden by ${OUT_ENV})")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes output bytes")

    for name in EXPERIMENTS:
        p = sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--delta", type=float, action="append", dest="deltas", help="scale; repeatable")
        p.add_argument("--s", type=float)
        p.add_argument("--t", type=float)
        p.add_argument("--lambda-grid", type=_float_list, dest="lambdas", help="comma-separated levels")
        p.add_argument("--dirs", type=int, dest="directions", help="number of sweep directions")

    r = sub.add_parser("render", parents=[common], help="render PGM rasters or measure CSVs to SVG")
    r.add_argument("inputs", nargs="+", help="one PGM, or one or more tube-measure CSVs to overlay")
    return parser


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config file {path}: {exc.strerror or exc}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_SCHEMA, f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(raw, dict):
        raise CliError(EXIT_SCHEMA, f"{path}: config must be a JSON object")
    return raw


def _line_of(path: str | None, key: str) -> str:
    """Best-effort source line of a top-level key, for diagnostics."""
    if not path:
        return ""
    name = key.split(".")[0]
    try:
        for no, line in enumerate(Path(path).read_text().splitlines(), 1):
            if f'"{name}"' in line:
                return f" (line {no})"
    except OSError:
        pass
    return ""


def write_outputs(out_dir: Path, files: dict[str, bytes], manifest: dict) -> None:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in sorted(files):
            (out_dir / name).write_bytes(files[name])
        manifest = {**manifest, "outputs": {name: digest(files[name]) for name in sorted(files)}}
        (out_dir / "manifest.json").write_text(canonical_json(manifest))
    except OSError as exc:
        target = exc.filename or out_dir
        raise CliError(EXIT_IO, f"cannot write output {target}: {exc.strerror or exc}") from None


def _out_dir(args) -> Path:
    return Path(os.environ.get(OUT_ENV) or args.out)


def run_render(args) -> int:
    for p in args.inputs:
        if not Path(p).is_file():
            raise CliError(EXIT_IO, f"cannot read input file {p}")
    try:
        svg = render_files(args.inputs)
    except FormatError as exc:
        raise CliError(EXIT_SCHEMA, f"malformed input: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read input {exc.filename}: {exc.strerror}") from None
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_SCHEMA, f"malformed input: {exc}") from None
    name = Path(args.inputs[0]).stem + ".svg"
    inputs = {Path(p).name: digest(Path(p).read_bytes()) for p in args.inputs}
    write_outputs(_out_dir(args), {name: svg.encode()}, {"command": "render", "version": __version__,
                                                         "inputs": inputs})
    print(f"wrote {_out_dir(args) / name}")
    return EXIT_OK


def run_experiment_command(args) -> int:
    raw = load_config(args.config)
    overrides = {k: getattr(args, k) for k in ("deltas", "s", "t", "lambdas", "directions", "seed")}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(args.command, cfg, threads=max(1, args.threads))
    except ConfigError as exc:
        raise CliError(EXIT_SCHEMA, f"config error at key '{exc.key}'{_line_of(args.config, exc.key)}: "
                                    f"{str(exc).split(': ', 1)[1]}") from None
    except FeatureSizeError as exc:
        raise CliError(EXIT_SCHEMA, f"config error: {exc}") from None
    except FormatError as exc:
        raise CliError(EXIT_SCHEMA, f"malformed input: {exc}") from None
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {exc.filename}: {exc.strerror}") from None
    manifest = {"command": args.command, "version": __version__, "config": cfg.resolved,
                "config_hash": config_hash(cfg.resolved), "flags": report.flags, "passed": report.passed}
    write_outputs(_out_dir(args), report.outputs(), manifest)
    for flag, ok in sorted(report.flags.items()):
        print(f"{'PASS' if ok else 'FAIL'} {flag}")
    return EXIT_OK if report.passed else EXIT_FAIL


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "render":
            return run_render(args)
        return run_experiment_command(args)
    except CliError as exc:
        print(f"kakeya-lab: {exc}", file=sys.stderr)
        return exc.code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
