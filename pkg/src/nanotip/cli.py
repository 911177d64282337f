"""Command-line interface: smm-scan, tdse-scan, analyze, ingest."""
from __future__ import annotations

import argparse
import sys

import yaml

from . import pipeline
from .errors import NanotipError


def _parse_override(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(
            f"override {text!r} must look like section.key=value")
    key, raw = text.split("=", 1)
    return key, yaml.safe_load(raw)


def _add_common(sub):
    sub.add_argument("--config", help="YAML run configuration")
    sub.add_argument("--preset", choices=sorted(pipeline.PRESETS),
                     help="named reference parameter set")
    sub.add_argument("--output-dir", help="output directory (overrides config)")
    sub.add_argument("--workers", type=int, help="parallel workers for scans")
    sub.add_argument("--set", dest="overrides", metavar="KEY=VALUE",
                     action="append", default=[], type=_parse_override,
                     help="override any config field, e.g. pulse.ce_phase=0.5")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanotip",
        description="Simulate and analyze phase-controlled electron emission "
                    "from a nanoscale metal tip")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("smm-scan", help="semiclassical phase scan")
    _add_common(p)
    p = subs.add_parser("tdse-scan", help="quantum-solver phase scan")
    _add_common(p)
    p = subs.add_parser("analyze", help="analyze an existing map file")
    _add_common(p)
    p.add_argument("--map", help="map file to analyze (sets input_map)")
    p = subs.add_parser("ingest", help="average retardation-curve blocks and "
                                       "export the spectrum")
    p.add_argument("--input", required=True, help="two-column CSV file")
    p.add_argument("--calibration", type=float, default=5.2,
                   help="vacuum level above the raw energy origin (eV)")
    p.add_argument("--smooth-ev", type=float, default=1.5,
                   help="Savitzky-Golay span for the derived spectrum (eV)")
    p.add_argument("--output-dir", default="out")
    return parser


def _run_mode(args, mode: str) -> int:
    overrides = dict(args.overrides)
    overrides["mode"] = mode
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    if args.workers:
        overrides["workers"] = args.workers
    if mode == "Analyze" and getattr(args, "map", None):
        overrides["input_map"] = args.map
    cfg = pipeline.load_config(args.config, args.preset, overrides)
    paths = pipeline.run(cfg)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def _run_ingest(args) -> int:
    from pathlib import Path

    from . import spectra
    from .pipeline import export_csv

    avg, blocks = pipeline.ingest_retardation(args.input, args.calibration)
    out = Path(args.output_dir)
    export_csv(avg, out / "retardation_curve.csv")
    spec = spectra.differentiate(avg)
    if args.smooth_ev > 0:
        spec = spectra.smooth_spectrum(spec, args.smooth_ev)
    export_csv(spec, out / "spectrum.csv")
    print(f"curve: {out / 'retardation_curve.csv'} ({len(blocks)} block(s) averaged)")
    print(f"spectrum: {out / 'spectrum.csv'}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "smm-scan":
            return _run_mode(args, "SmmScan")
        if args.command == "tdse-scan":
            return _run_mode(args, "TdseScan")
        if args.command == "analyze":
            return _run_mode(args, "Analyze")
        if args.command == "ingest":
            return _run_ingest(args)
    except NanotipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
