"""Cumulative metrics (Recall, Diversity, F_beta) and the scaled regret.

Aggregation conventions:

* A user is "alive" at round t when their episode reached t; round-t
  averages divide by the alive count, so early candidate exhaustion shrinks
  the denominator instead of injecting zeros.
* Users with an empty positive set cannot have recall and are excluded with
  a warning; the exclusion count is carried on the series.
* Per-round contributions are sorted before summing, so every aggregate is
  invariant to permuting the user list, bit for bit.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

from .catalog import ItemCatalog, PreferenceVector, Slate, utility
from .environments import SimInstance, TrialLog
from .errors import (
    PreconditionError,
    UndefinedDiversityError,
    UndefinedSimilarityError,
)
from .greedy import exhaustive_optimum, greedy_select


@dataclass(frozen=True)
class RegretConfig:
    """How to score regret: the approximation factor and the optimum oracle."""

    gamma: float = 0.25
    optimum_mode: str = "exhaustive"

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.optimum_mode not in ("exhaustive", "greedy-oracle"):
            raise ValueError(f"unknown optimum_mode {self.optimum_mode!r}")


@dataclass(frozen=True)
class RegretSeries:
    """Cumulative regret curves for one episode (simulation only)."""

    scaled: np.ndarray  # sum_t F(A*_t) - F(A_t)/gamma   (can be negative)
    raw: np.ndarray  # sum_t F(A*_t) - F(A_t)
    optimum_values: np.ndarray  # F(A*_t) per round
    width_sum: np.ndarray  # cumulative selection widths (zero for baselines)


@dataclass(frozen=True)
class MetricSeries:
    """Round-indexed replay metrics averaged over users."""

    rounds: np.ndarray
    recall: np.ndarray
    diversity: np.ndarray
    f_beta: dict[float, np.ndarray]
    n_users: np.ndarray  # alive count per round
    n_excluded: int  # users dropped for empty positive sets

    def __post_init__(self):
        lengths = {
            self.rounds.shape[0],
            self.recall.shape[0],
            self.diversity.shape[0],
            self.n_users.shape[0],
        } | {v.shape[0] for v in self.f_beta.values()}
        if len(lengths) != 1:
            raise ValueError("metric series lengths differ")


def _ordered_mean(values: list[float]) -> float:
    # sorting first makes the float sum independent of user ordering
    return float(np.sort(np.asarray(values, dtype=np.float64)).sum() / len(values))


def _usable(logs, positives) -> tuple[list[TrialLog], list[frozenset], int]:
    if len(logs) != len(positives):
        raise ValueError(
            f"{len(logs)} logs but {len(positives)} positive sets"
        )
    kept_logs, kept_pos, excluded = [], [], 0
    for log, pos in zip(logs, positives):
        if len(pos) == 0:
            excluded += 1
            continue
        kept_logs.append(log)
        kept_pos.append(frozenset(pos))
    if excluded:
        warnings.warn(
            f"excluded {excluded} user(s) with empty positive sets", stacklevel=3
        )
    return kept_logs, kept_pos, excluded


def recall_at(logs, positives, t: int) -> float:
    """Mean over alive users of sum_{l<=t} |A_l intersect I| / |I|."""
    kept_logs, kept_pos, _ = _usable(logs, positives)
    contributions = []
    for log, pos in zip(kept_logs, kept_pos):
        if len(log) < t:
            continue  # user's episode ended before t
        hits = sum(
            1 for entry in log.rounds[:t] for item in entry.items if item in pos
        )
        contributions.append(hits / len(pos))
    if not contributions:
        raise PreconditionError(f"no user is alive at round {t}")
    return _ordered_mean(contributions)


def _unit_rows(catalog: ItemCatalog) -> np.ndarray:
    norms = np.linalg.norm(catalog.relevance, axis=1)
    if np.any(norms == 0.0):
        raise UndefinedSimilarityError(
            "cosine diversity undefined for zero-norm embeddings"
        )
    return catalog.relevance / norms[:, None]


def slate_diversity(items, catalog: ItemCatalog, unit: np.ndarray | None = None) -> float:
    """Mean raw cosine distance over the slate's pairs: 2/(|A|(|A|-1)) * sum."""
    if len(items) < 2:
        raise UndefinedDiversityError(
            f"diversity needs at least 2 items, got {len(items)}"
        )
    if unit is None:
        unit = _unit_rows(catalog)
    vecs = unit[list(items)]
    sims = vecs @ vecs.T
    n = len(items)
    upper = sims[np.triu_indices(n, k=1)]
    return float(np.sum(1.0 - upper) * 2.0 / (n * (n - 1)))


def diversity_at(logs, catalog: ItemCatalog, t: int) -> float:
    """Per user: average slate diversity over rounds 1..t; then mean over users.

    Always measured with the raw cosine distance, whatever metric mode the
    policy optimized — this is the reported metric, not the objective.
    """
    unit = _unit_rows(catalog)
    contributions = []
    for log in logs:
        if len(log) < t:
            continue
        per_round = [
            slate_diversity(entry.items, catalog, unit) for entry in log.rounds[:t]
        ]
        contributions.append(float(np.sort(np.asarray(per_round)).sum() / t))
    if not contributions:
        raise PreconditionError(f"no user is alive at round {t}")
    return _ordered_mean(contributions)


def f_beta_at(recall: float, diversity: float, beta: float) -> float:
    """(1+b^2)*R*D / (b^2*D + R); recall weighted beta times as important."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if recall < 0 or diversity < 0:
        raise ValueError("recall and diversity must be non-negative")
    denominator = beta * beta * diversity + recall
    if denominator == 0.0:
        return 0.0
    return (1.0 + beta * beta) * recall * diversity / denominator


def compute_metric_series(
    logs, positives, catalog: ItemCatalog, betas=(1.0, 2.0)
) -> MetricSeries:
    """Recall/Diversity/F_beta at every round up to the longest episode."""
    kept_logs, kept_pos, excluded = _usable(logs, positives)
    if not kept_logs:
        raise PreconditionError("no usable users")
    horizon = max(len(log) for log in kept_logs)
    rounds = np.arange(1, horizon + 1)
    recall = np.zeros(horizon)
    diversity = np.zeros(horizon)
    n_users = np.zeros(horizon, dtype=np.intp)
    unit = _unit_rows(catalog)

    # running per-user state so the sweep is O(total rounds), not O(t^2)
    hit_fractions = [0.0 for _ in kept_logs]
    diversity_sums = [0.0 for _ in kept_logs]
    for t in rounds:
        rec_vals, div_vals = [], []
        for i, (log, pos) in enumerate(zip(kept_logs, kept_pos)):
            if len(log) < t:
                continue
            entry = log.rounds[t - 1]
            hit_fractions[i] += sum(
                1 for item in entry.items if item in pos
            ) / len(pos)
            diversity_sums[i] += slate_diversity(entry.items, catalog, unit)
            rec_vals.append(hit_fractions[i])
            div_vals.append(diversity_sums[i] / t)
        n_users[t - 1] = len(rec_vals)
        recall[t - 1] = _ordered_mean(rec_vals)
        diversity[t - 1] = _ordered_mean(div_vals)

    f_beta = {
        float(b): np.array(
            [f_beta_at(recall[i], diversity[i], b) for i in range(horizon)]
        )
        for b in betas
    }
    return MetricSeries(
        rounds=rounds,
        recall=recall,
        diversity=diversity,
        f_beta=f_beta,
        n_users=n_users,
        n_excluded=excluded,
    )


def _optimum_cache_lookup(
    cache: dict,
    candidates: tuple[int, ...],
    eta_star: PreferenceVector,
    catalog: ItemCatalog,
    k: int,
    mode: str,
) -> float:
    value = cache.get(candidates)
    if value is None:
        if mode == "exhaustive":
            _, value = exhaustive_optimum(eta_star, catalog, candidates, k)
        else:
            value = greedy_select(eta_star, catalog, candidates, k).value
        cache[candidates] = value
    return value


def scaled_regret(
    log: TrialLog, instance: SimInstance, config: RegretConfig = RegretConfig()
) -> RegretSeries:
    """Cumulative F(A*_t) - F(A_t)/gamma and the unscaled companion series.

    A*_t maximizes the true utility over that round's candidates — found by
    exhaustive search by default, or by the true-preference greedy slate in
    greedy-oracle mode (cheaper, and a lower bound on the true optimum).
    Only simulation logs qualify: the true utility must have been recorded.
    """
    n = len(log)
    scaled = np.zeros(n)
    raw = np.zeros(n)
    optima = np.zeros(n)
    width_sum = np.zeros(n)
    cache: dict[tuple[int, ...], float] = {}
    running_scaled = running_raw = running_width = 0.0
    for i, entry in enumerate(log.rounds):
        if entry.true_utility is None or entry.candidate_items is None:
            raise PreconditionError(
                "regret needs simulation logs with recorded true utilities"
            )
        k = len(entry.items)
        best = _optimum_cache_lookup(
            cache, entry.candidate_items, instance.eta_star, instance.catalog, k,
            config.optimum_mode,
        )
        optima[i] = best
        running_scaled += best - entry.true_utility / config.gamma
        running_raw += best - entry.true_utility
        if entry.widths is not None:
            running_width += float(np.sum(entry.widths))
        scaled[i] = running_scaled
        raw[i] = running_raw
        width_sum[i] = running_width
    return RegretSeries(
        scaled=scaled, raw=raw, optimum_values=optima, width_sum=width_sum
    )


def average_regret(series: list[RegretSeries]) -> RegretSeries:
    """Pointwise mean over runs; all runs must share one horizon."""
    if not series:
        raise ValueError("no regret series to average")
    lengths = {s.scaled.shape[0] for s in series}
    if len(lengths) != 1:
        raise ValueError(f"regret series have differing lengths: {sorted(lengths)}")
    stack = lambda attr: np.mean([getattr(s, attr) for s in series], axis=0)
    return RegretSeries(
        scaled=stack("scaled"),
        raw=stack("raw"),
        optimum_values=stack("optimum_values"),
        width_sum=stack("width_sum"),
    )


def write_metrics_csv(series: MetricSeries, path) -> None:
    """Schema: round, metric, beta, value, n_users (beta empty off f_beta rows)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "metric", "beta", "value", "n_users"])
        for i, t in enumerate(series.rounds):
            n = int(series.n_users[i])
            writer.writerow([int(t), "recall", "", repr(float(series.recall[i])), n])
            writer.writerow(
                [int(t), "diversity", "", repr(float(series.diversity[i])), n]
            )
            for beta in sorted(series.f_beta):
                writer.writerow(
                    [
                        int(t),
                        "f_beta",
                        repr(beta),
                        repr(float(series.f_beta[beta][i])),
                        n,
                    ]
                )


def write_regret_csv(
    series: RegretSeries,
    path,
    bounds: np.ndarray | None = None,
    budgets: np.ndarray | None = None,
) -> None:
    """Schema: round, scaled_regret, raw_regret, bound, width_sum, width_budget."""
    n = series.scaled.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["round", "scaled_regret", "raw_regret", "bound", "width_sum", "width_budget"]
        )
        for i in range(n):
            bound = "" if bounds is None else repr(float(bounds[i]))
            budget = "" if budgets is None else repr(float(budgets[i]))
            writer.writerow(
                [
                    i + 1,
                    repr(float(series.scaled[i])),
                    repr(float(series.raw[i])),
                    bound,
                    repr(float(series.width_sum[i])),
                    budget,
                ]
            )
