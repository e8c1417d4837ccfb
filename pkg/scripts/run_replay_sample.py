#!/usr/bin/env python3
"""Offline replay on the bundled sample dataset, all four policies.

A smoke-scale version of the full replay study; point --dataset and
--embeddings at real data (e.g. MovieLens-100K plus trained item vectors)
for the real thing, and raise --k/--rounds back to 10/30.

    python3 scripts/run_replay_sample.py --out results/replay-sample
"""

import argparse
import csv
from pathlib import Path

from dispersion_bandit.cli import main as cli

ROOT = Path(__file__).resolve().parent.parent


def run() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="results/replay-sample")
    parser.add_argument("--dataset", default=str(ROOT / "data/sample/ratings.csv"))
    parser.add_argument("--format", default="generic-csv")
    parser.add_argument(
        "--embeddings", default=str(ROOT / "data/sample/embeddings.csv")
    )
    parser.add_argument("--k", type=int, default=4)
    parser.add_argument("--rounds", type=int, default=6)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    base = Path(args.out)

    finals = {}
    for policy in ("lmdh", "logrank", "mmr", "epsilon-greedy"):
        out = base / policy
        cli(
            ["replay", "--dataset", args.dataset, "--format", args.format,
             "--embeddings", args.embeddings, "--policy", policy,
             "--k", str(args.k), "--rounds", str(args.rounds),
             "--seed", str(args.seed), "--out", str(out)]
        )
        with open(out / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        last_t = rows[-1]["round"]
        finals[policy] = {
            row["metric"]: float(row["value"])
            for row in rows
            if row["round"] == last_t and row["metric"] in ("recall", "diversity")
        }

    print()
    print(f"{'policy':<16}{'recall':>10}{'diversity':>12}")
    for policy, vals in finals.items():
        print(f"{policy:<16}{vals['recall']:>10.4f}{vals['diversity']:>12.4f}")


if __name__ == "__main__":
    run()
