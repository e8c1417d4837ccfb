"""Command-line front end: simulate, replay, approx-ratio, ingest.

Every command resolves its full configuration up front (seed fallback, alpha
resolution, defaults) and writes a ``manifest.json`` next to its outputs.  The
manifest stores the resolved argument vector, so re-running it reproduces the
outputs byte for byte — CSV floats are written with ``repr`` and nothing
depends on wall-clock time or worker count.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from functools import lru_cache
from pathlib import Path

import numpy as np

from .baselines import EpsilonGreedyPolicy, LogRankPolicy, MmrPolicy, StaticScorer
from .catalog import ItemCatalog, cosine_metric
from .environments import (
    ReplayEnvironment,
    ReplayUser,
    SimulatedEnvironment,
    study_instance,
    run_episode,
)
from .errors import DispersionBanditError, ParseError
from .evaluation import (
    RegretConfig,
    average_regret,
    compute_metric_series,
    scaled_regret,
    write_metrics_csv,
    write_regret_csv,
)
from .greedy import exhaustive_optimum, greedy_select
from .ingest import (
    FORMAT_ALIASES,
    FORMATS,
    SplitSpec,
    canonical_format,
    filter_top_items,
    load_embeddings,
    parse_ratings,
    split_users,
    synthetic_embeddings,
    write_maps,
)
from .lmdh import (
    LmdhConfig,
    LmdhPolicy,
    TheoryParams,
    lemma1_width_budget,
    regret_upper_bound,
    theoretical_alpha,
)
from .seeding import STREAM_POLICY, derive_seed, rng_from_seed

# Simulated-study constants: 20 items with 10-d features, one dispersion term.
SIM_ITEMS = 20
SIM_D = 10
SIM_M = 1
DEFAULT_RATIO_KS = (2, 3, 4, 5)
# Index offset reserved for the synthetic-embedding draw so it never collides
# with per-run or per-user seed indices.
EMB_SEED_INDEX = 977

POLICIES = ("lmdh", "logrank", "mmr", "epsilon-greedy")
METRIC_MODES = ("raw", "slate-normalized")
OPTIMUM_MODES = ("exhaustive", "greedy-oracle")


def resolve_seed(value: int | None) -> int:
    """Flag value, else the LMDB_SEED environment variable, else 0."""
    if value is not None:
        return int(value)
    env = os.environ.get("LMDB_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise SystemExit(f"LMDB_SEED must be an integer, got {env!r}")


def resolve_workers(value: int | None, n_tasks: int) -> int:
    if value is None:
        value = os.cpu_count() or 1
    if value < 1:
        raise SystemExit(f"--workers must be >= 1, got {value}")
    return max(1, min(value, n_tasks))


def _sim_theory(n: int, k: int, d: int, m: int, lam: float, horizon: int) -> TheoryParams:
    # One confidence budget split across every pull of the horizon; floor the
    # product so delta stays inside (0, 1) even for one-pull toy horizons.
    delta = 1.0 / max(horizon * k, 2)
    return TheoryParams(n=n, k=k, d=d, m=m, lam=lam, delta=delta)


def resolve_alpha(spec: str, k: int, d: int, m: int, lam: float, horizon: int) -> float:
    """Parse --alpha: a float literal, or "theory" for the derived radius."""
    if spec == "theory":
        return theoretical_alpha(_sim_theory(horizon, k, d, m, lam, horizon))
    try:
        value = float(spec)
    except ValueError:
        raise SystemExit(f'--alpha must be a number or "theory", got {spec!r}')
    if value < 0:
        raise SystemExit(f"--alpha must be non-negative, got {value}")
    return value


def _write_manifest(out_dir: Path, command: str, options: dict, derived: dict, outputs: list[str]) -> None:
    argv: list[str] = [command]
    for flag in sorted(options):
        value = options[flag]
        if value is None:
            continue
        argv.extend([f"--{flag}", str(value)])
    payload = {
        "command": command,
        "argv": argv,
        "options": options,
        "derived": derived,
        "outputs": outputs,
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text)


def _map_tasks(fn, tasks: list, workers: int) -> list:
    """Order-preserving map, forking a pool only when it can actually help."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(task) for task in tasks]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        return list(pool.map(fn, tasks))


# ---------------------------------------------------------------------------
# simulate


def _make_scored_policy(
    name: str,
    catalog: ItemCatalog,
    k: int,
    epsilon: float,
    mmr_alpha: float,
    policy_rng: np.random.Generator,
):
    """Baselines score with a population preference drawn from the same prior
    as the true one — a stand-in for a scorer trained on other users."""
    u_bar = policy_rng.uniform(0.0, 0.2, catalog.relevance_dim)
    scorer = StaticScorer(u_bar, catalog)
    if name == "logrank":
        return LogRankPolicy(scorer, catalog, k)
    if name == "mmr":
        return MmrPolicy(scorer, catalog, k, mmr_alpha)
    if name == "epsilon-greedy":
        return EpsilonGreedyPolicy(scorer, catalog, k, epsilon, policy_rng)
    raise SystemExit(f"unknown policy {name!r}")


def _simulate_run(task: tuple):
    (
        policy_name,
        lam,
        alpha_value,
        epsilon,
        mmr_alpha,
        k,
        rounds,
        run_seed,
        metric_mode,
        optimum_mode,
    ) = task
    instance = study_instance(
        run_seed, n_items=SIM_ITEMS, d=SIM_D, k=k, metric_mode=metric_mode
    )
    if policy_name == "lmdh":
        config = LmdhConfig(lam=lam, alpha=alpha_value, d=SIM_D, m=SIM_M, k=k)
        policy = LmdhPolicy(config, instance.catalog)
    else:
        policy_rng = rng_from_seed(run_seed, STREAM_POLICY)
        policy = _make_scored_policy(
            policy_name, instance.catalog, k, epsilon, mmr_alpha, policy_rng
        )
    environment = SimulatedEnvironment(instance)
    log = run_episode(policy, environment, rounds, k)
    return scaled_regret(log, instance, RegretConfig(optimum_mode=optimum_mode))


def cmd_simulate(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    alpha_value = resolve_alpha(args.alpha, args.k, SIM_D, SIM_M, args.lam, args.rounds)
    run_seeds = [derive_seed(seed, r) for r in range(args.runs)]
    tasks = [
        (
            args.policy,
            args.lam,
            alpha_value,
            args.epsilon,
            args.mmr_alpha,
            args.k,
            args.rounds,
            run_seed,
            args.metric_mode,
            args.optimum,
        )
        for run_seed in run_seeds
    ]
    workers = resolve_workers(args.workers, len(tasks))
    series = average_regret(_map_tasks(_simulate_run, tasks, workers))

    bounds = budgets = None
    if args.policy == "lmdh":
        params = [
            _sim_theory(t, args.k, SIM_D, SIM_M, args.lam, args.rounds)
            for t in range(1, args.rounds + 1)
        ]
        budgets = np.array([lemma1_width_budget(p) for p in params])
        needed = theoretical_alpha(params[-1])
        if alpha_value >= needed - 1e-9:
            bounds = np.array([regret_upper_bound(p, alpha_value) for p in params])
    write_regret_csv(series, out / "regret.csv", bounds=bounds, budgets=budgets)

    options = {
        "policy": args.policy,
        "lambda": args.lam,
        "alpha": args.alpha,
        "epsilon": args.epsilon,
        "mmr-alpha": args.mmr_alpha,
        "k": args.k,
        "rounds": args.rounds,
        "runs": args.runs,
        "metric-mode": args.metric_mode,
        "optimum": args.optimum,
        "seed": seed,
        "out": str(args.out),
    }
    derived = {
        "alpha_value": alpha_value,
        "delta": 1.0 / max(args.rounds * args.k, 2),
        "run_seeds": run_seeds,
        "sim_items": SIM_ITEMS,
        "sim_d": SIM_D,
        "sim_m": SIM_M,
    }
    _write_manifest(out, "simulate", options, derived, ["regret.csv"])

    final = args.rounds - 1
    line = (
        f"{args.policy}: runs={args.runs} rounds={args.rounds} "
        f"raw_regret={series.raw[final]:.3f} scaled_regret={series.scaled[final]:.3f}"
    )
    if bounds is not None:
        line += f" bound={bounds[final]:.1f}"
    if args.policy == "lmdh":
        line += f" width_sum={series.width_sum[final]:.3f}"
    print(line)
    print(f"wrote {out / 'regret.csv'}")
    return 0


# ---------------------------------------------------------------------------
# approx-ratio


def _ratio_task(task: tuple):
    instance_seed, k, metric_mode = task
    instance = study_instance(
        instance_seed, n_items=SIM_ITEMS, d=SIM_D, k=k, metric_mode=metric_mode
    )
    candidates = instance.catalog.all_items()
    result = greedy_select(instance.eta_star, instance.catalog, candidates, k)
    _, optimal_value = exhaustive_optimum(
        instance.eta_star, instance.catalog, candidates, k
    )
    ratio = result.value / optimal_value if optimal_value > 0 else 1.0
    return result.value, optimal_value, ratio


def cmd_approx_ratio(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ks = [args.k] if args.k is not None else list(DEFAULT_RATIO_KS)
    instance_seeds = [derive_seed(seed, i) for i in range(args.runs)]
    tasks = [(s, k, args.metric_mode) for k in ks for s in instance_seeds]
    workers = resolve_workers(args.workers, len(tasks))
    results = _map_tasks(_ratio_task, tasks, workers)

    path = out / "ratios.csv"
    with open(path, "w", newline="") as fh:
        fh.write("K,user,greedy_value,optimal_value,ratio\n")
        idx = 0
        for k in ks:
            for user in range(args.runs):
                greedy_value, optimal_value, ratio = results[idx]
                idx += 1
                fh.write(
                    f"{k},{user},{repr(float(greedy_value))},"
                    f"{repr(float(optimal_value))},{repr(float(ratio))}\n"
                )

    options = {
        "k": args.k,
        "runs": args.runs,
        "metric-mode": args.metric_mode,
        "seed": seed,
        "out": str(args.out),
    }
    derived = {
        "ks": ks,
        "instance_seeds": instance_seeds,
        "sim_items": SIM_ITEMS,
        "sim_d": SIM_D,
    }
    _write_manifest(out, "approx-ratio", options, derived, ["ratios.csv"])

    idx = 0
    for k in ks:
        block = results[idx : idx + args.runs]
        idx += args.runs
        ratios = [r[2] for r in block]
        print(
            f"K={k}: mean ratio {np.mean(ratios):.4f} "
            f"min {np.min(ratios):.4f} over {args.runs} instances"
        )
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# replay


def _sniff_embedding_dim(path: str) -> int:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split(",")
    if len(header) < 2 or header[0] != "item":
        raise ParseError("embeddings header must be item,e0,...,e{d-1}", line_number=1)
    return len(header) - 1


@lru_cache(maxsize=1)
def _replay_context(key: tuple):
    """Rebuild the replay world from primitives (cached once per process)."""
    (dataset, fmt, threshold, top_items, seed, embeddings, metric_mode, k) = key
    table = parse_ratings(dataset, fmt, threshold)
    if top_items is not None:
        table = filter_top_items(table, top_items)
    train, test = split_users(table, SplitSpec(seed=seed))
    if embeddings is not None:
        d = _sniff_embedding_dim(embeddings)
        emb = load_embeddings(embeddings, d, expected_items=table.item_ids)
        vectors = emb.matrix_for(table.item_ids)
    else:
        vectors = synthetic_embeddings(
            table.n_items, SIM_D, -1.0, 1.0, derive_seed(seed, EMB_SEED_INDEX)
        ).vectors
    metric = cosine_metric(vectors, mode=metric_mode, slate_capacity=k)
    catalog = ItemCatalog(vectors, (metric,))
    # Population scorer: mean over training users of their mean positive-item
    # vector (profile of an average user, as a trained ranker would supply).
    user_means = np.vstack(
        [vectors[train.items_of(u)].mean(axis=0) for u in range(train.n_users)]
    )
    u_bar = user_means.mean(axis=0)
    return table, test, catalog, u_bar


def _replay_task(task: tuple):
    (key, policy_name, lam, alpha_value, epsilon, mmr_alpha, k, rounds, seed, u) = task
    _, test, catalog, u_bar = _replay_context(key)
    positives = frozenset(int(i) for i in test.items_of(u))
    user = ReplayUser(user_id=u, positives=positives)
    if policy_name == "lmdh":
        config = LmdhConfig(
            lam=lam, alpha=alpha_value, d=catalog.relevance_dim, m=1, k=k
        )
        policy = LmdhPolicy(config, catalog)
    else:
        scorer = StaticScorer(u_bar, catalog)
        if policy_name == "logrank":
            policy = LogRankPolicy(scorer, catalog, k)
        elif policy_name == "mmr":
            policy = MmrPolicy(scorer, catalog, k, mmr_alpha)
        elif policy_name == "epsilon-greedy":
            policy = EpsilonGreedyPolicy(
                scorer,
                catalog,
                k,
                epsilon,
                rng_from_seed(derive_seed(seed, u), STREAM_POLICY),
            )
        else:
            raise SystemExit(f"unknown policy {policy_name!r}")
    environment = ReplayEnvironment(catalog, user)
    return run_episode(policy, environment, rounds, k)


def cmd_replay(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt = canonical_format(args.format)
    key = (
        args.dataset,
        fmt,
        args.threshold,
        args.top_items,
        seed,
        args.embeddings,
        args.metric_mode,
        args.k,
    )
    table, test, catalog, _ = _replay_context(key)
    alpha_value = resolve_alpha(
        args.alpha, args.k, catalog.relevance_dim, 1, args.lam, args.rounds
    )
    tasks = [
        (
            key,
            args.policy,
            args.lam,
            alpha_value,
            args.epsilon,
            args.mmr_alpha,
            args.k,
            args.rounds,
            seed,
            u,
        )
        for u in range(test.n_users)
    ]
    workers = resolve_workers(args.workers, len(tasks))
    logs = _map_tasks(_replay_task, tasks, workers)
    positives = [
        frozenset(int(i) for i in test.items_of(u)) for u in range(test.n_users)
    ]
    series = compute_metric_series(logs, positives, catalog)
    write_metrics_csv(series, out / "metrics.csv")

    options = {
        "dataset": args.dataset,
        "format": args.format,
        "threshold": args.threshold,
        "embeddings": args.embeddings,
        "top-items": args.top_items,
        "policy": args.policy,
        "lambda": args.lam,
        "alpha": args.alpha,
        "epsilon": args.epsilon,
        "mmr-alpha": args.mmr_alpha,
        "k": args.k,
        "rounds": args.rounds,
        "metric-mode": args.metric_mode,
        "seed": seed,
        "out": str(args.out),
    }
    derived = {
        "alpha_value": alpha_value,
        "format_canonical": fmt,
        "n_users": table.n_users,
        "n_items": table.n_items,
        "n_interactions": table.n_interactions,
        "n_test_users": test.n_users,
        "embedding_d": catalog.relevance_dim,
        "embedding_seed": None
        if args.embeddings is not None
        else derive_seed(seed, EMB_SEED_INDEX),
    }
    _write_manifest(out, "replay", options, derived, ["metrics.csv"])

    last = len(series.rounds) - 1
    print(
        f"{args.policy}: {test.n_users} test users, "
        f"{len(series.rounds)} rounds evaluated, "
        f"recall={series.recall[last]:.4f} diversity={series.diversity[last]:.4f}"
    )
    print(f"wrote {out / 'metrics.csv'}")
    return 0


# ---------------------------------------------------------------------------
# ingest


def cmd_ingest(args: argparse.Namespace) -> int:
    fmt = canonical_format(args.format)
    table = parse_ratings(args.dataset, fmt, args.threshold)
    if args.top_items is not None:
        table = filter_top_items(table, args.top_items)
    print(
        f"{table.n_users} users, {table.n_items} items, "
        f"{table.n_interactions} interactions"
    )
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_maps(table, out / "users.map.csv", out / "items.map.csv")
        options = {
            "dataset": args.dataset,
            "format": args.format,
            "threshold": args.threshold,
            "top-items": args.top_items,
            "out": str(args.out),
        }
        derived = {
            "format_canonical": fmt,
            "n_users": table.n_users,
            "n_items": table.n_items,
            "n_interactions": table.n_interactions,
            "filtered_below_threshold": table.filtered_count,
            "duplicates_collapsed": table.duplicate_count,
        }
        _write_manifest(
            out, "ingest", options, derived, ["users.map.csv", "items.map.csv"]
        )
        print(f"wrote {out / 'users.map.csv'} and {out / 'items.map.csv'}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_seed_workers(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="experiment seed (default: LMDB_SEED env var, then 0)",
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="worker processes (default: all cores); never changes outputs",
    )


def _add_policy_flags(parser: argparse.ArgumentParser, lam: float) -> None:
    parser.add_argument("--policy", choices=POLICIES, default="lmdh")
    parser.add_argument(
        "--lambda",
        dest="lam",
        type=float,
        default=lam,
        help=f"ridge regularizer (default {lam})",
    )
    parser.add_argument(
        "--alpha",
        default="1.0",
        help='exploration width multiplier, or "theory" for the derived radius',
    )
    parser.add_argument("--epsilon", type=float, default=0.05)
    parser.add_argument("--mmr-alpha", dest="mmr_alpha", type=float, default=0.9)


def _add_dataset_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="ratings file to parse")
    parser.add_argument(
        "--format",
        choices=sorted(set(FORMATS) | set(FORMAT_ALIASES)),
        default="ml100k-tab",
    )
    parser.add_argument(
        "--threshold",
        type=float,
        default=3.0,
        help="keep interactions with rating strictly above this",
    )
    parser.add_argument(
        "--top-items",
        dest="top_items",
        type=int,
        default=None,
        help="keep only the N most-rated items",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dispersion-bandit",
        description="Diversified slate bandits: simulation, offline replay, "
        "greedy-ratio studies, and dataset ingestion.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="seeded Bernoulli simulation, regret curves")
    _add_policy_flags(sim, lam=1.0)
    sim.add_argument("--k", type=int, default=5)
    sim.add_argument("--rounds", type=int, default=1000)
    sim.add_argument("--runs", type=int, default=20)
    sim.add_argument("--metric-mode", dest="metric_mode", choices=METRIC_MODES,
                     default="slate-normalized")
    sim.add_argument("--optimum", choices=OPTIMUM_MODES, default="exhaustive")
    sim.add_argument("--out", required=True)
    _add_seed_workers(sim)
    sim.set_defaults(func=cmd_simulate)

    ratio = sub.add_parser(
        "approx-ratio", help="greedy vs exhaustive utility on random instances"
    )
    ratio.add_argument("--k", type=int, default=None, help="single slate size "
                       "(default: sweep 2, 3, 4, 5)")
    ratio.add_argument("--runs", type=int, default=100, help="instances per K")
    ratio.add_argument("--metric-mode", dest="metric_mode", choices=METRIC_MODES,
                       default="raw")
    ratio.add_argument("--out", required=True)
    _add_seed_workers(ratio)
    ratio.set_defaults(func=cmd_approx_ratio)

    rep = sub.add_parser("replay", help="offline replay over held-out users")
    _add_dataset_flags(rep)
    rep.add_argument(
        "--embeddings",
        default=None,
        help="item embedding CSV (item,e0,...); synthetic when omitted",
    )
    _add_policy_flags(rep, lam=50.0)
    rep.add_argument("--k", type=int, default=10)
    rep.add_argument("--rounds", type=int, default=30)
    rep.add_argument("--metric-mode", dest="metric_mode", choices=METRIC_MODES,
                     default="slate-normalized")
    rep.add_argument("--out", required=True)
    _add_seed_workers(rep)
    rep.set_defaults(func=cmd_replay)

    ing = sub.add_parser("ingest", help="parse a ratings file, print its summary")
    _add_dataset_flags(ing)
    ing.add_argument("--out", default=None, help="directory for index maps")
    ing.set_defaults(func=cmd_ingest)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DispersionBanditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
