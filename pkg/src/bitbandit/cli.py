"""Command-line interface.

Subcommands:

* ``run CONFIG``            -- simulate every seed in a config, write CSVs
* ``summarize TRACE...``    -- cross-seed summary of existing trace CSVs
* ``codec-selftest``        -- rank/unrank bijection and bit-budget checks
* ``xstar CONFIG``          -- print the theta -> xstar table of a config
"""

from __future__ import annotations

import argparse
import random
import sys

import numpy as np

from .codec import bit_budget, lattice_enumerator, q_size
from .env import RegretTrace
from .harness import (
    ConfigValidationError,
    build_known_action_map,
    load_config,
    run_experiment,
    summarize,
    write_summary_csv,
)


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    if args.output_dir:
        cfg.output_dir = args.output_dir
    result = run_experiment(cfg)
    print(f"wrote {len(result.trace_paths)} trace(s) and {result.summary_path}")
    for row in result.summary_rows:
        print(
            f"  t={row['t']:>8d}  mean_regret={row['mean_cum_regret']:.3f} "
            f"+- {row['mean_cum_regret'] - row['ci95_lo']:.3f}  "
            f"bits/round={row['mean_bits_per_round']:.2f}"
        )
    return 0


def _cmd_summarize(args) -> int:
    traces = [RegretTrace.read_csv(p) for p in args.traces]
    rows = summarize(traces)
    write_summary_csv(rows, args.output)
    print(f"wrote {args.output} ({len(traces)} trace(s))")
    return 0


def _cmd_codec_selftest(args) -> int:
    rng = random.Random(0)  # stdlib: ranks can exceed any fixed-width integer
    failures = 0
    for d in range(1, args.max_d + 1):
        enum = lattice_enumerator(d)
        budget = bit_budget(d)
        bound = 1 + np.log2(2 * d + 1) + 5.03 * d
        if budget > bound:
            print(f"d={d}: budget {budget} exceeds bound {bound:.2f}")
            failures += 1
        if enum.size != q_size(d):
            print(f"d={d}: enumerator size {enum.size} != q_size {q_size(d)}")
            failures += 1
        if enum.size <= args.exhaustive_limit:
            ranks = range(enum.size)
        else:
            ranks = (rng.randrange(enum.size) for _ in range(args.samples))
        bad = sum(1 for r in ranks if enum.rank(enum.unrank(r)) != r)
        failures += bad
        mode = "exhaustive" if enum.size <= args.exhaustive_limit else "sampled"
        print(f"d={d:3d}: |Q|={enum.size}  budget={budget} bits  "
              f"roundtrip {mode} ok={bad == 0}")
    if failures:
        print(f"selftest FAILED ({failures} failure(s))", file=sys.stderr)
        return 1
    print("selftest passed")
    return 0


def _cmd_xstar(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    if cfg.algorithm.kind != "known":
        print("xstar tables apply to the known-dist learner only", file=sys.stderr)
        return 2
    amap = build_known_action_map(cfg)
    print(f"# provenance: {amap.provenance}")
    for theta, row in zip(amap.thetas, amap.table):
        print(f"theta={np.array2string(theta, precision=6)} -> "
              f"xstar={np.array2string(row, precision=6)}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="bitbandit",
        description="Simulate contextual linear bandits under uplink bit constraints.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run every seed of an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", help="override the config's output_dir")
    p_run.set_defaults(fn=_cmd_run)

    p_sum = sub.add_parser("summarize", help="summarize existing trace CSVs")
    p_sum.add_argument("traces", nargs="+")
    p_sum.add_argument("-o", "--output", default="summary.csv")
    p_sum.set_defaults(fn=_cmd_summarize)

    p_codec = sub.add_parser("codec-selftest", help="verify codec bijection and budgets")
    p_codec.add_argument("--max-d", type=int, default=16)
    p_codec.add_argument("--samples", type=int, default=1000)
    p_codec.add_argument("--exhaustive-limit", type=int, default=4000)
    p_codec.set_defaults(fn=_cmd_codec_selftest)

    p_xstar = sub.add_parser("xstar", help="print a config's theta -> xstar table")
    p_xstar.add_argument("config")
    p_xstar.set_defaults(fn=_cmd_xstar)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
