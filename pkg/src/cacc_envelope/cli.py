"""Command-line entry point: run, batch, scan, falsify, validate."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import EnvelopeViolation, ScenarioError, TraceError
from .executor import run_scenario
from .monitor import monitor_trace
from .oracle import boundary_scan, falsify, parse_grid
from .scenario import load_params, load_scenario

log = logging.getLogger("cacc_envelope")


def _setup_logging():
    level = os.environ.get("CACC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _png_path(out) -> Path:
    return Path(out).with_suffix(".png")


def cmd_run(args) -> int:
    from .traceio import emit_trace_csv, trace_table

    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc.seed = args.seed
    if args.ghosts:
        sc.ghosts = True
    if args.cycles is not None:
        sc.cycles = args.cycles
    trace = run_scenario(sc)
    emit_trace_csv(trace, args.out, args.samples or sc.samples_per_segment)
    verdicts = monitor_trace(trace, k=sc.interior_samples)
    for v in verdicts:
        print(v.line())
    if not args.no_plot:
        from .plotting import plot_trace

        png = _png_path(args.out)
        plot_trace(trace_table(trace, args.samples or sc.samples_per_segment), png,
                   title=f"seed {sc.seed}")
        print(f"figure: {png}")
    print(f"trace: {args.out}")
    return 0 if all(v.passed for v in verdicts if v.applicable) else 1


def cmd_batch(args) -> int:
    from .batch import run_batch

    sc = load_scenario(args.scenario)
    summary = run_batch(sc, args.runs, args.seed, chunk=args.chunk,
                        ghosts=True if args.ghosts else None)
    print(summary.table())
    return summary.exit_code


def cmd_scan(args) -> int:
    p = load_params(args.params)
    vf, vld = parse_grid(args.grid)
    scan = boundary_scan(p, vf, vld)
    scan.to_csv(args.out)
    print(f"cells: {vf.size * vld.size}")
    print(f"max |formula - oracle|: {scan.max_abs_error:.3e} m")
    print(f"min conservatism: {scan.conservatism.min():.3e} m")
    if not args.no_plot:
        from .plotting import plot_scan

        png = _png_path(args.out)
        plot_scan(scan, png)
        print(f"figure: {png}")
    print(f"table: {args.out}")
    return 0


def cmd_falsify(args) -> int:
    p = load_params(args.params)
    res = falsify(p, args.margin_scale)
    if res is None:
        print(f"margin_scale={args.margin_scale}: no counterexample")
        return 0
    w = res.initial
    print(f"margin_scale={args.margin_scale}: counterexample "
          f"(v_f={float(w.v_f):.6f}, v_ld={float(w.v_ld):.6f}, gap={float(w.gap):.9f})")
    print(res.verdict.line())
    if args.out:
        from .traceio import emit_trace_csv

        emit_trace_csv(res.trace, args.out)
        print(f"trace: {args.out}")
    return 0


def cmd_validate(args) -> int:
    sc = load_scenario(args.scenario)
    print(f"ok: {args.scenario} (cycles={sc.cycles}, seed={sc.seed})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cacc-envelope",
                                 description="Safe control envelope for delayed, lossy CACC.")
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario, write its trace CSV and figure")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", required=True)
    r.add_argument("--ghosts", action="store_true")
    r.add_argument("--cycles", type=int)
    r.add_argument("--samples", type=int, help="samples per segment in the CSV")
    r.add_argument("--no-plot", action="store_true")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="many seeded runs with monitoring")
    b.add_argument("--scenario", required=True)
    b.add_argument("--runs", type=int, required=True)
    b.add_argument("--seed", type=int)
    b.add_argument("--ghosts", action="store_true")
    b.add_argument("--chunk", type=int, default=10_000)
    b.set_defaults(func=cmd_batch)

    s = sub.add_parser("scan", help="guard threshold vs oracle over a (v_f, v_ld) grid")
    s.add_argument("--params", required=True)
    s.add_argument("--grid", default="vf=0:40:50,vld=0:40:50")
    s.add_argument("--out", required=True)
    s.add_argument("--no-plot", action="store_true")
    s.set_defaults(func=cmd_scan)

    f = sub.add_parser("falsify", help="search for a collision with a scaled margin")
    f.add_argument("--params", required=True)
    f.add_argument("--margin-scale", type=float, required=True)
    f.add_argument("--out")
    f.set_defaults(func=cmd_falsify)

    v = sub.add_parser("validate", help="parse and validate a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (EnvelopeViolation, TraceError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
