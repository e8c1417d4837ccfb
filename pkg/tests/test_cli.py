"""End-to-end checks of the command-line front end.

Most tests drive main() in-process for speed; one subprocess test proves the
module entry point works from a cold interpreter.
"""

import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from dispersion_bandit.cli import build_parser, main, resolve_seed

ROOT = Path(__file__).resolve().parent.parent
RATINGS = str(ROOT / "data" / "sample" / "ratings.csv")
EMBEDDINGS = str(ROOT / "data" / "sample" / "embeddings.csv")


def sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def read_manifest(out: Path) -> dict:
    return json.loads((out / "manifest.json").read_text())


def csv_rows(path: Path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_parser_defaults():
    p = build_parser()
    sim = p.parse_args(["simulate", "--out", "x"])
    assert (sim.lam, sim.alpha, sim.k, sim.rounds, sim.runs) == (1.0, "1.0", 5, 1000, 20)
    assert sim.metric_mode == "slate-normalized"
    assert sim.optimum == "exhaustive"
    rep = p.parse_args(["replay", "--dataset", "d", "--out", "x"])
    assert (rep.lam, rep.k, rep.rounds, rep.threshold) == (50.0, 10, 30, 3.0)
    assert (rep.epsilon, rep.mmr_alpha) == (0.05, 0.9)
    ratio = p.parse_args(["approx-ratio", "--out", "x"])
    assert ratio.metric_mode == "raw"
    assert ratio.runs == 100 and ratio.k is None


def test_ingest_summary_line(capsys):
    code = main(["ingest", "--dataset", RATINGS, "--format", "generic"])
    assert code == 0
    line = capsys.readouterr().out.splitlines()[0]
    assert line == "19 users, 32 items, 76 interactions"


def test_ingest_writes_maps_and_manifest(tmp_path, capsys):
    out = tmp_path / "ing"
    assert main(["ingest", "--dataset", RATINGS, "--format", "generic-csv",
                 "--out", str(out)]) == 0
    users = (out / "users.map.csv").read_text().splitlines()
    items = (out / "items.map.csv").read_text().splitlines()
    assert users[0] == "dense,original" and users[1] == "0,1"
    assert items[0] == "dense,original" and items[1] == "0,101"
    manifest = read_manifest(out)
    assert manifest["command"] == "ingest"
    assert manifest["derived"]["n_users"] == 19
    assert manifest["derived"]["n_interactions"] == 76


def test_ingest_format_alias_matches_canonical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["ingest", "--dataset", RATINGS, "--format", "generic", "--out", str(a)])
    main(["ingest", "--dataset", RATINGS, "--format", "generic-csv", "--out", str(b)])
    capsys.readouterr()
    assert sha(a / "users.map.csv") == sha(b / "users.map.csv")
    assert sha(a / "items.map.csv") == sha(b / "items.map.csv")


def test_ingest_wrong_format_exits_with_error(capsys):
    # the generic header cannot parse as tab-separated ml100k
    code = main(["ingest", "--dataset", RATINGS, "--format", "ml100k-tab"])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_simulate_rerun_is_byte_identical(tmp_path, capsys):
    out = tmp_path / "sim"
    argv = ["simulate", "--runs", "2", "--rounds", "15", "--out", str(out),
            "--workers", "1"]
    assert main(argv) == 0
    first = (sha(out / "regret.csv"), sha(out / "manifest.json"))
    assert main(argv) == 0
    capsys.readouterr()
    assert (sha(out / "regret.csv"), sha(out / "manifest.json")) == first


def test_manifest_argv_reproduces_outputs(tmp_path, capsys):
    out = tmp_path / "sim"
    assert main(["simulate", "--runs", "2", "--rounds", "10", "--seed", "5",
                 "--out", str(out), "--workers", "1"]) == 0
    manifest = read_manifest(out)
    first = sha(out / "regret.csv")
    # the recorded argv alone must recreate the exact same artifacts
    assert main(manifest["argv"]) == 0
    capsys.readouterr()
    assert sha(out / "regret.csv") == first
    assert read_manifest(out) == manifest


def test_worker_count_does_not_change_outputs(tmp_path, capsys):
    lone, pooled = tmp_path / "w1", tmp_path / "w2"
    main(["simulate", "--runs", "3", "--rounds", "10", "--out", str(lone),
          "--workers", "1"])
    main(["simulate", "--runs", "3", "--rounds", "10", "--out", str(pooled),
          "--workers", "2"])
    capsys.readouterr()
    assert sha(lone / "regret.csv") == sha(pooled / "regret.csv")


def test_simulate_theory_alpha_fills_bound_column(tmp_path, capsys):
    out = tmp_path / "theory"
    main(["simulate", "--alpha", "theory", "--runs", "1", "--rounds", "12",
          "--out", str(out), "--workers", "1"])
    capsys.readouterr()
    rows = csv_rows(out / "regret.csv")
    assert len(rows) == 12
    assert all(row["bound"] != "" for row in rows)
    budgets = [float(row["width_budget"]) for row in rows]
    assert all(b2 > b1 for b1, b2 in zip(budgets, budgets[1:]))
    manifest = read_manifest(out)
    assert manifest["options"]["alpha"] == "theory"
    assert manifest["derived"]["alpha_value"] > 1.0


def test_simulate_default_alpha_leaves_bound_empty(tmp_path, capsys):
    out = tmp_path / "plain"
    main(["simulate", "--runs", "1", "--rounds", "8", "--out", str(out),
          "--workers", "1"])
    capsys.readouterr()
    rows = csv_rows(out / "regret.csv")
    assert all(row["bound"] == "" for row in rows)
    assert all(row["width_budget"] != "" for row in rows)


def test_simulate_baseline_logs_zero_width(tmp_path, capsys):
    out = tmp_path / "base"
    main(["simulate", "--policy", "logrank", "--runs", "1", "--rounds", "8",
          "--out", str(out), "--workers", "1"])
    capsys.readouterr()
    rows = csv_rows(out / "regret.csv")
    assert all(float(row["width_sum"]) == 0.0 for row in rows)
    assert all(row["bound"] == "" and row["width_budget"] == "" for row in rows)


def test_approx_ratio_sweep_and_csv(tmp_path, capsys):
    out = tmp_path / "ratio"
    assert main(["approx-ratio", "--runs", "3", "--out", str(out),
                 "--workers", "1"]) == 0
    stdout = capsys.readouterr().out
    assert sum(1 for line in stdout.splitlines() if line.startswith("K=")) == 4
    rows = csv_rows(out / "ratios.csv")
    assert len(rows) == 12  # 4 slate sizes x 3 instances
    for row in rows:
        ratio = float(row["ratio"])
        assert 0.25 - 1e-9 <= ratio <= 1.0 + 1e-9
        assert float(row["greedy_value"]) <= float(row["optimal_value"]) + 1e-9
    assert read_manifest(out)["derived"]["ks"] == [2, 3, 4, 5]


def test_approx_ratio_single_k(tmp_path, capsys):
    out = tmp_path / "ratio3"
    main(["approx-ratio", "--k", "3", "--runs", "2", "--out", str(out),
          "--workers", "1"])
    capsys.readouterr()
    rows = csv_rows(out / "ratios.csv")
    assert [row["K"] for row in rows] == ["3", "3"]
    assert read_manifest(out)["derived"]["ks"] == [3]


def test_replay_metrics_schema_and_recall_monotone(tmp_path, capsys):
    out = tmp_path / "rep"
    assert main(["replay", "--dataset", RATINGS, "--format", "generic",
                 "--embeddings", EMBEDDINGS, "--k", "4", "--rounds", "4",
                 "--out", str(out), "--workers", "1"]) == 0
    capsys.readouterr()
    rows = csv_rows(out / "metrics.csv")
    recall = [float(r["value"]) for r in rows if r["metric"] == "recall"]
    assert len(recall) == 4
    assert all(b >= a - 1e-12 for a, b in zip(recall, recall[1:]))
    assert all(int(r["n_users"]) >= 1 for r in rows)
    betas = {r["beta"] for r in rows if r["metric"] == "f_beta"}
    assert betas == {"1.0", "2.0"}
    manifest = read_manifest(out)
    assert manifest["derived"]["n_test_users"] == 4
    assert manifest["derived"]["embedding_d"] == 10


def test_replay_randomized_policy_is_deterministic(tmp_path, capsys):
    out = tmp_path / "eps"
    argv = ["replay", "--dataset", RATINGS, "--format", "generic",
            "--embeddings", EMBEDDINGS, "--policy", "epsilon-greedy",
            "--k", "4", "--rounds", "3", "--out", str(out), "--workers", "1"]
    main(argv)
    first = sha(out / "metrics.csv")
    main(argv)
    capsys.readouterr()
    assert sha(out / "metrics.csv") == first


def test_replay_synthetic_embeddings_when_omitted(tmp_path, capsys):
    out = tmp_path / "syn"
    assert main(["replay", "--dataset", RATINGS, "--format", "generic",
                 "--k", "4", "--rounds", "2", "--out", str(out),
                 "--workers", "1"]) == 0
    capsys.readouterr()
    manifest = read_manifest(out)
    assert manifest["derived"]["embedding_seed"] is not None
    assert manifest["derived"]["embedding_d"] == 10


def test_seed_env_fallback_and_flag_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("LMDB_SEED", "9")
    out = tmp_path / "env"
    main(["approx-ratio", "--k", "2", "--runs", "1", "--out", str(out),
          "--workers", "1"])
    assert read_manifest(out)["options"]["seed"] == 9
    out2 = tmp_path / "flag"
    main(["approx-ratio", "--k", "2", "--runs", "1", "--seed", "3",
          "--out", str(out2), "--workers", "1"])
    capsys.readouterr()
    assert read_manifest(out2)["options"]["seed"] == 3


def test_bad_env_seed_rejected(monkeypatch):
    monkeypatch.setenv("LMDB_SEED", "not-a-number")
    with pytest.raises(SystemExit):
        resolve_seed(None)


def test_invalid_alpha_rejected(tmp_path):
    with pytest.raises(SystemExit):
        main(["simulate", "--alpha", "nope", "--runs", "1", "--rounds", "5",
              "--out", str(tmp_path / "x"), "--workers", "1"])


def test_module_entry_point_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "dispersion_bandit.cli", "ingest",
         "--dataset", RATINGS, "--format", "generic"],
        capture_output=True, text=True, check=True,
    )
    assert proc.stdout.splitlines()[0] == "19 users, 32 items, 76 interactions"
