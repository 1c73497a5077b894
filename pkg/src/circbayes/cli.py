"""``cs-bench`` command line entry point."""

from __future__ import annotations

import argparse
import os
import sys

from . import bench
from .errors import CSError

TIMING_NOTE = (
    "t_s covers applying the operator, t_r the solver call, t_p sampling + "
    "noise + reconstruction + metrics. Times go to timings.csv; pass "
    "--inline-timings to also fill them into results.csv (which then stops "
    "being reproducible byte for byte)."
)


def _report(checks, out=sys.stdout):
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}  [{c.detail}]", file=out)
    return all(c.passed for c in checks)


def cmd_run(args):
    doc = bench.load_sweep(args.config)
    base = dict(doc["base"])
    if args.seed is not None:
        base["base_seed"] = args.seed
    cells = bench.expand_grid(base, doc["grid"])
    table = bench.run_sweep(cells, args.workers, args.parallel_timing)
    bench.write_outputs(args.out, table, cells, args.inline_timings, args.parallel_timing)
    failed = sum(r.failed for r in table)
    print(f"{len(table)} trials, {failed} failed -> {args.out}")
    return 0


def cmd_figs(args):
    ok = True
    for which in args.which:
        cells = bench.figure_cells(which, args.seed, args.trials)
        table = bench.run_sweep(cells, args.workers, args.parallel_timing)
        out = os.path.join(args.out, which)
        summary = bench.write_outputs(out, table, cells, args.inline_timings, args.parallel_timing)
        fig = bench.FIGURES[which]
        if fig["x_axis"]:
            bench.write_plotdata(summary, os.path.join(out, f"{which}.dat"), fig["x_axis"])
        else:
            bench.write_table1(summary, os.path.join(out, f"{which}.txt"))
        print(f"== {which} ({len(table)} trials) -> {out}")
        ok &= _report(fig["checks"](summary))
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="cs-bench", description="Compressive sensing solver benchmarks.",
                                epilog=TIMING_NOTE)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="base seed (overrides the config)")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--parallel-timing", action="store_true",
                        help="let timed sections of different trials overlap (records are flagged)")
        sp.add_argument("--inline-timings", action="store_true",
                        help="write wall-clock times into results.csv as well")

    run = sub.add_parser("run", help="run a sweep described by a JSON config", epilog=TIMING_NOTE)
    run.add_argument("--config", required=True)
    common(run)
    run.set_defaults(func=cmd_run)

    figs = sub.add_parser("figs", help="run the canned comparison sweeps and check their trends",
                          epilog=TIMING_NOTE)
    figs.add_argument("--which", nargs="+", choices=sorted(bench.FIGURES), required=True)
    figs.add_argument("--trials", type=int, default=None, help="trials per cell (default 100)")
    common(figs)
    figs.set_defaults(func=cmd_figs)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CSError, OSError) as exc:
        print(f"cs-bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
