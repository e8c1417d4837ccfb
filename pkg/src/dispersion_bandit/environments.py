"""Feedback worlds: the simulated Bernoulli user and the offline replay user.

Both worlds expose the same two calls — ``candidates(t, k)`` and
``feedback(selection)`` — so `run_episode` can drive any policy against
either.  The simulated world knows the hidden preference vector eta* and
draws position rewards from Bernoulli(clamp(eta*.delta, 0, 1)); the replay
world scores a recommendation 1 exactly when the item sits in the user's
held-out positive set, and removes everything already recommended from
future candidate sets.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .baselines import SlateSelection
from .catalog import (
    ItemCatalog,
    PreferenceVector,
    Slate,
    cosine_metric,
    diversity_marginal,
    utility,
)
from .errors import (
    DimensionMismatchError,
    DispersionBanditError,
    ExhaustedCandidatesError,
    ProtocolViolationError,
)
from .seeding import (
    STREAM_CANDIDATES,
    STREAM_INSTANCE,
    STREAM_REWARDS,
    as_rng,
    rng_from_seed,
)


@dataclass(frozen=True)
class SimInstance:
    """A simulated world: catalog plus the hidden truth eta*."""

    catalog: ItemCatalog
    eta_star: PreferenceVector
    seed: int
    candidate_mode: str = "all"
    sample_size: int | None = None

    def __post_init__(self):
        if self.eta_star.theta.shape[0] != self.catalog.relevance_dim:
            raise DimensionMismatchError(
                f"eta_star has {self.eta_star.theta.shape[0]} relevance weights, "
                f"catalog expects {self.catalog.relevance_dim}"
            )
        if self.eta_star.beta.shape[0] != self.catalog.diversity_dim:
            raise DimensionMismatchError(
                f"eta_star has {self.eta_star.beta.shape[0]} diversity weights, "
                f"catalog expects {self.catalog.diversity_dim}"
            )
        if self.candidate_mode not in ("all", "sampled"):
            raise ValueError(f"unknown candidate_mode {self.candidate_mode!r}")
        if self.candidate_mode == "sampled" and not self.sample_size:
            raise ValueError("sampled candidate_mode requires a sample_size")


def study_instance(
    seed: int,
    n_items: int = 20,
    d: int = 10,
    k: int = 5,
    feature_low: float = 0.0,
    feature_high: float = 0.5,
    pref_low: float = 0.0,
    pref_high: float = 0.2,
    metric_mode: str = "slate-normalized",
    candidate_mode: str = "all",
    sample_size: int | None = None,
) -> SimInstance:
    """Draw a simulated instance: features U[0, 0.5]^d, preferences U[0, 0.2].

    The non-negative ranges make the greedy guarantee's preconditions hold by
    construction.  One diversity function (cosine dispersion), so m = 1.
    """
    rng = rng_from_seed(seed, STREAM_INSTANCE)
    vectors = rng.uniform(feature_low, feature_high, size=(n_items, d))
    theta = rng.uniform(pref_low, pref_high, size=d)
    beta = rng.uniform(pref_low, pref_high, size=1)
    metric = cosine_metric(vectors, mode=metric_mode, slate_capacity=k)
    catalog = ItemCatalog(vectors, (metric,))
    return SimInstance(
        catalog=catalog,
        eta_star=PreferenceVector(theta, beta),
        seed=seed,
        candidate_mode=candidate_mode,
        sample_size=sample_size,
    )


@dataclass
class ReplayUser:
    """One held-out user: positive test items plus everything shown so far."""

    user_id: int
    positives: frozenset[int]
    consumed: set[int] = field(default_factory=set)


@dataclass(frozen=True)
class TrialRound:
    """Everything observed in one round, in selection order."""

    t: int
    num_candidates: int
    items: tuple[int, ...]
    rewards: tuple[float, ...]
    relevance_features: np.ndarray
    diversity_features: np.ndarray
    widths: np.ndarray | None
    true_utility: float | None
    candidate_items: tuple[int, ...] | None = None  # kept in simulation only


@dataclass(frozen=True)
class TrialLog:
    """Ordered rounds of one (policy, user/run) episode."""

    rounds: tuple[TrialRound, ...]

    def __len__(self) -> int:
        return len(self.rounds)

    def __iter__(self):
        return iter(self.rounds)


def position_means(slate: Slate, instance: SimInstance) -> tuple[np.ndarray, int]:
    """Clamped Bernoulli means per position and how many clamps fired.

    Position k's raw mean is eta*.delta(a_k | a_1..a_{k-1}); diversity gains
    can push it past 1, so values are clipped into [0, 1] and the clips
    counted for visibility.
    """
    theta, beta = instance.eta_star.theta, instance.eta_star.beta
    means = np.zeros(len(slate))
    clamp_hits = 0
    for pos, item in enumerate(slate.items):
        idx = instance.catalog.check_item(item)
        prefix = slate.items[:pos]
        raw = float(
            theta @ instance.catalog.relevance[idx]
            + beta @ diversity_marginal(item, prefix, instance.catalog)
        )
        if raw < 0.0 or raw > 1.0:
            clamp_hits += 1
        means[pos] = min(max(raw, 0.0), 1.0)
    return means, clamp_hits


def bernoulli_feedback(
    slate: Slate, instance: SimInstance, rng: np.random.Generator | int
) -> np.ndarray:
    """Independent Bernoulli rewards, one per position, deterministic per seed."""
    rng = as_rng(rng)
    means, _ = position_means(slate, instance)
    return (rng.random(len(slate)) < means).astype(np.float64)


def replay_feedback(slate: Slate, user: ReplayUser) -> np.ndarray:
    """Membership rewards against the user's positives; consumes the slate."""
    repeats = user.consumed.intersection(slate.items)
    if repeats:
        raise ProtocolViolationError(
            f"user {user.user_id} was already shown items {sorted(repeats)}"
        )
    rewards = np.array(
        [1.0 if item in user.positives else 0.0 for item in slate.items]
    )
    user.consumed.update(slate.items)
    return rewards


def candidate_set(
    t: int,
    ground,
    consumed,
    k: int,
    mode: str = "remaining",
    rng: np.random.Generator | None = None,
    sample_size: int | None = None,
) -> np.ndarray:
    """Ground set minus consumed items, optionally subsampled, sorted by id."""
    ground = np.unique(np.asarray(list(ground), dtype=np.intp))
    if consumed:
        remaining = np.setdiff1d(ground, np.asarray(sorted(consumed), dtype=np.intp))
    else:
        remaining = ground
    if remaining.size < k:
        raise ExhaustedCandidatesError(
            f"round {t}: {remaining.size} candidates left, need {k}"
        )
    if mode == "sampled":
        if rng is None or sample_size is None:
            raise ValueError("sampled mode needs an rng and a sample_size")
        size = min(int(sample_size), remaining.size)
        if size < k:
            raise ExhaustedCandidatesError(
                f"round {t}: sample of {size} cannot fill a slate of {k}"
            )
        remaining = np.sort(rng.choice(remaining, size=size, replace=False))
    return remaining


class SimulatedEnvironment:
    """Bernoulli world; the full ground set is on offer every round.

    Candidates are not consumed across rounds here — the horizon (1000
    rounds) dwarfs the inventory (20 items) in the simulated study, so the
    same items stay recommendable and the learner revisits them.  `sampled`
    mode draws a fresh seeded subset each round instead.
    """

    kind = "simulated"

    def __init__(self, instance: SimInstance):
        self.instance = instance
        self._rewards_rng = rng_from_seed(instance.seed, STREAM_REWARDS)
        self._candidates_rng = rng_from_seed(instance.seed, STREAM_CANDIDATES)
        self.clamp_hits = 0

    def candidates(self, t: int, k: int) -> np.ndarray:
        mode = self.instance.candidate_mode
        if mode == "all":
            items = self.instance.catalog.all_items()
            if items.size < k:
                raise ExhaustedCandidatesError(
                    f"round {t}: catalog holds {items.size} items, need {k}"
                )
            return items
        return candidate_set(
            t,
            self.instance.catalog.all_items(),
            set(),
            k,
            mode="sampled",
            rng=self._candidates_rng,
            sample_size=self.instance.sample_size,
        )

    def feedback(self, selection: SlateSelection) -> np.ndarray:
        means, hits = position_means(selection.slate, self.instance)
        self.clamp_hits += hits
        return (self._rewards_rng.random(len(selection.slate)) < means).astype(
            np.float64
        )

    def true_utility(self, slate: Slate) -> float:
        return utility(slate, self.instance.eta_star, self.instance.catalog)


class ReplayEnvironment:
    """Offline replay world: membership rewards, consumed items leave the pool."""

    kind = "replay"

    def __init__(self, catalog: ItemCatalog, user: ReplayUser, ground=None):
        self.catalog = catalog
        self.user = user
        self.ground = (
            catalog.all_items()
            if ground is None
            else np.unique(np.asarray(list(ground), dtype=np.intp))
        )

    def candidates(self, t: int, k: int) -> np.ndarray:
        return candidate_set(t, self.ground, self.user.consumed, k)

    def feedback(self, selection: SlateSelection) -> np.ndarray:
        return replay_feedback(selection.slate, self.user)


def run_episode(policy, environment, n: int, k: int) -> TrialLog:
    """Drive `policy` against `environment` for up to n rounds.

    Candidate exhaustion ends the episode gracefully with the rounds finished
    so far; any other library error propagates annotated with the round it
    occurred in.  Deterministic given the policy and environment seeds.
    """
    rounds: list[TrialRound] = []
    for t in range(1, n + 1):
        try:
            cand = environment.candidates(t, k)
        except ExhaustedCandidatesError:
            break
        try:
            selection = policy.select(cand, t)
            rewards = environment.feedback(selection)
            policy.observe(selection, rewards)
        except DispersionBanditError as exc:
            if exc.args:
                exc.args = (f"round {t}: {exc.args[0]}",) + exc.args[1:]
            else:
                exc.args = (f"round {t}",)
            raise
        simulated = hasattr(environment, "true_utility")
        rounds.append(
            TrialRound(
                t=t,
                num_candidates=int(cand.size),
                items=selection.slate.items,
                rewards=tuple(float(r) for r in rewards),
                relevance_features=selection.relevance_features,
                diversity_features=selection.diversity_features,
                widths=None if selection.widths is None else selection.widths.copy(),
                true_utility=(
                    environment.true_utility(selection.slate) if simulated else None
                ),
                candidate_items=tuple(int(c) for c in cand) if simulated else None,
            )
        )
    return TrialLog(tuple(rounds))


def write_trial_log(log: TrialLog, path) -> None:
    """CSV form: one row per (round, position); width empty for static policies."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "position", "item_id", "reward", "width"])
        for entry in log.rounds:
            for pos, item in enumerate(entry.items):
                width = "" if entry.widths is None else repr(float(entry.widths[pos]))
                writer.writerow(
                    [entry.t, pos + 1, item, repr(entry.rewards[pos]), width]
                )
