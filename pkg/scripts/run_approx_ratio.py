#!/usr/bin/env python3
"""Greedy-vs-exhaustive ratio study over random instances.

    python3 scripts/run_approx_ratio.py --out results/ratios [--runs 100]

Per-slate-size means print as the study runs; the per-instance table lands
in ratios.csv.
"""

import argparse

from dispersion_bandit.cli import main as cli


def run() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="results/ratios")
    parser.add_argument("--runs", type=int, default=100)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    cli(
        ["approx-ratio", "--runs", str(args.runs), "--seed", str(args.seed),
         "--out", args.out]
    )


if __name__ == "__main__":
    run()
