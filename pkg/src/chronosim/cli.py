"""Command line entry point.

Exit codes: 0 success, 2 parse/validation error, 3 simulation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import ChronosimError, MalformedTrace, ParseError, UnknownParameter, ValidationError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3


def _out_dir(arg, default_name):
    if arg:
        return Path(arg)
    return Path(os.environ.get("CHRONOSIM_OUT", "chronosim_out")) / default_name


def _summary_line(summary):
    keys = ("status", "deadline_misses", "delivery_ratio", "latency_mean", "J")
    return " ".join(f"{k}={summary.get(k)}" for k in keys)


def cmd_run(args):
    from .runner import run_scenario
    from .scenario import load_scenario

    s = load_scenario(args.scenario)
    out = _out_dir(args.out, s.name)
    m = run_scenario(s, out, seed=args.seed, until=args.until, plots=args.plots or None)
    print(f"{out}: {_summary_line(m['summary'])}")
    if m["status"] != "ok":
        print(f"error: {m['error']}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_validate(args):
    from .scenario import load_scenario

    s = load_scenario(args.scenario)
    print(f"{args.scenario}: ok ({len(s.nodes)} nodes, {len(s.networks)} networks, {len(s.plants)} plants)")
    return EXIT_OK


def cmd_sweep(args):
    from .scenario import load_scenario
    from .sweep import encode_table, parse_value, sweep, write_table

    s = load_scenario(args.scenario)
    values = [parse_value(v) for v in args.values.split(",")] if args.values.strip() else []
    rows = sweep(s, args.param, values, seeds=args.seeds, workers=args.workers)
    if args.out:
        write_table(rows, args.out)
        print(f"{args.out}: {len(rows)} rows")
    else:
        sys.stdout.write(encode_table(rows))
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else EXIT_RUNTIME


def cmd_bench(args):
    from .bench import benchmark_dcservo
    from .net.common import DelayModel

    delay = DelayModel.parse(args.delay) if args.delay else None
    out = _out_dir(args.out, f"{args.name}_{args.policy}")
    res = benchmark_dcservo(args.policy, args.loss, delay, seed=args.seed, out_dir=out)
    m = res["metrics"]
    print(f"{out}: {_summary_line(m)}")
    if args.json:
        print(json.dumps(m, indent=2, sort_keys=True))
    return EXIT_OK if m["status"] == "ok" else EXIT_RUNTIME


def cmd_plot(args):
    from .plots import render_plots

    out = _out_dir(args.out, "plots")
    for p in render_plots(args.traces, out):
        print(p)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="chronosim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario and write its traces")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int)
    r.add_argument("--until", type=float)
    r.add_argument("--out")
    r.add_argument("--plots", action="store_true", help="also render SVG plots")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="parse and validate a scenario")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("sweep", help="run a parameter sweep")
    s.add_argument("scenario")
    s.add_argument("--param", required=True, help="dotted path, e.g. networks.0.loss_prob")
    s.add_argument("--values", required=True, help="comma separated values")
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", help="CSV file (default: stdout)")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="run a shipped benchmark")
    b.add_argument("name", choices=["dcservo"])
    b.add_argument("--policy", choices=["fp", "dm", "edf"], default="edf", type=str.lower)
    b.add_argument("--loss", type=float, default=0.0)
    b.add_argument("--delay", help="none | const:D | uniform:LO,HI | markov:PGB,PBG,DGOOD,DBAD")
    b.add_argument("--seed", type=int)
    b.add_argument("--out")
    b.add_argument("--json", action="store_true", help="print the full metrics")
    b.set_defaults(func=cmd_bench)

    pl = sub.add_parser("plot", help="render trace files to SVG")
    pl.add_argument("traces", nargs="+")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValidationError, UnknownParameter, MalformedTrace) as exc:
        print(f"invalid: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ChronosimError as exc:
        print(f"simulation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
