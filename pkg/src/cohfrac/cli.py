"""Command-line front end.

    cohfrac simulate  --config scenario.yaml --output run/
    cohfrac correlate run/A.pts run/B.pts --output run/g2x.csv
    cohfrac analyze   run/g2x.csv --delta 900e-9 --output run/result.json
    cohfrac sweep     --config scenario.yaml --axis rho --values 0,0.5,1
    cohfrac region    --output region.csv

Exit codes: 0 success, 2 invalid input, 3 fit did not converge,
4 fitted amplitude wholly outside the physical range.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import SWEEP_AXES, ConfigError, load_config
from .correlator import CorrelationHistogram, autocorrelate, cross_correlate
from .inference import FitError, NonPhysicalError, unc_g2_region
from .optics import read_pts, write_pts
from .pipeline import SWEEP_COLUMNS, analyze, result_record, simulate, sweep

EXIT_OK, EXIT_INVALID, EXIT_FIT, EXIT_NONPHYSICAL = 0, 2, 3, 4

log = logging.getLogger("cohfrac")


def _seconds(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.set("seed", args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    a, b = simulate(cfg)
    for stream in (a, b):
        path = out / f"{stream.channel}.pts"
        write_pts(path, stream)
        print(f"{stream.channel}: {len(stream)} events, {stream.rate:.6g} counts/s -> {path}")
    return EXIT_OK


def cmd_correlate(args) -> int:
    a = read_pts(args.file_a, "A")
    bin_width = args.bin_width if args.bin_width is not None else 2e-9
    window = args.window if args.window is not None else 2e-6
    if args.file_b is None:
        h = autocorrelate(a, bin_width, window, threads=args.threads)
    else:
        b = read_pts(args.file_b, "B")
        h = cross_correlate(a, b, bin_width, window, threads=args.threads)
    h.write(args.output)
    print(f"{len(h)} bins, r_A={h.rate_a:.6g}/s r_B={h.rate_b:.6g}/s -> {args.output}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    h = CorrelationHistogram.read(args.histogram)
    confidence = args.confidence if args.confidence is not None else 0.9
    fit, bounds = analyze(h, args.delta, confidence, args.method, args.seed)
    record = result_record(fit, bounds)
    text = json.dumps(record, indent=2)
    if args.output:
        Path(args.output).write_text(text + "\n")
    print(text)
    if args.plot_data:
        cols = np.column_stack((h.centers, h.g, h.sigma, fit.model(h.centers)))
        np.savetxt(args.plot_data, cols, delimiter=",", header="tau_s,g,sigma,fit",
                   fmt="%.12e")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.set("seed", args.seed)
    if args.delta is not None:
        cfg = cfg.set("interferometer.delta", args.delta)
    if args.bin_width is not None:
        cfg = cfg.set("correlator.bin_width", args.bin_width)
    if args.window is not None:
        cfg = cfg.set("correlator.window", args.window)
    if args.confidence is not None:
        cfg = cfg.set("fit.confidence", args.confidence)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, got {args.values!r}")
    rows = sweep(cfg, args.axis, values, threads=args.threads)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=[args.axis if c == "value" else c for c in SWEEP_COLUMNS])
        writer.writeheader()
        for row in rows:
            writer.writerow({(args.axis if k == "value" else k): v for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_region(args) -> int:
    grid = np.linspace(args.min, args.max, args.points)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        writer = csv.writer(fh)
        writer.writerow(["g2x0", "g2_unc_lower", "g2_unc_upper"])
        for x in grid:
            lo, hi = unc_g2_region(float(x))
            writer.writerow([f"{x:.12g}", f"{lo:.12g}", "" if hi is None else f"{hi:.12g}"])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cohfrac", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate both interferometer outputs to PTS1 files")
    s.add_argument("--config")
    s.add_argument("--seed", type=int)
    s.add_argument("--output", default=".", help="output directory")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("correlate", help="histogram pair time differences")
    s.add_argument("file_a")
    s.add_argument("file_b", nargs="?", help="omit to autocorrelate file_a")
    s.add_argument("--bin-width", type=_seconds)
    s.add_argument("--window", type=_seconds)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--output", default="g2x.csv")
    s.set_defaults(func=cmd_correlate)

    s = sub.add_parser("analyze", help="fit the dip and bound the coherent fraction")
    s.add_argument("histogram")
    s.add_argument("--delta", type=_seconds, help="interferometer delay to exclude around")
    s.add_argument("--confidence", type=float)
    s.add_argument("--method", choices=("quadrature", "monte-carlo"), default="quadrature")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--output")
    s.add_argument("--plot-data")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="repeat simulate/correlate/analyze along one axis")
    s.add_argument("--config")
    s.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--seed", type=int)
    s.add_argument("--delta", type=_seconds)
    s.add_argument("--bin-width", type=_seconds)
    s.add_argument("--window", type=_seconds)
    s.add_argument("--confidence", type=float)
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--output")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("region", help="allowed g2_unc(0) range versus g2X(0)")
    s.add_argument("--min", type=float, default=0.0)
    s.add_argument("--max", type=float, default=1.5)
    s.add_argument("--points", type=int, default=301)
    s.add_argument("--output")
    s.set_defaults(func=cmd_region)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FIT
    except NonPhysicalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONPHYSICAL
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
