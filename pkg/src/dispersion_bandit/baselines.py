"""Comparison policies (LogRank, MMR, epsilon-greedy) and the policy interface.

Every policy, learned or static, speaks the same protocol: `select` returns a
SlateSelection carrying the slate *plus* the marginal features as they stood
at each selection step, and `observe` receives that same selection with the
realized rewards.  Logging features at selection time matters because the
diversity component of an item's features depends on the partial slate it was
appended to; recomputing them later is forbidden for learners.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .catalog import (
    ItemCatalog,
    Slate,
    diversity_marginal,
)
from .errors import DimensionMismatchError, InsufficientCandidatesError
from .seeding import as_rng


@dataclass(frozen=True)
class SlateSelection:
    """A selected slate with the per-position features logged at pick time."""

    slate: Slate
    relevance_features: np.ndarray  # (k, d): z_a for each position
    diversity_features: np.ndarray  # (k, m): x_a against the partial slate
    widths: np.ndarray | None = None  # sqrt(v_a) per position; UCB policies only
    scores: np.ndarray | None = None


@runtime_checkable
class PolicyInterface(Protocol):
    """Contract shared by LMDH and all baselines.

    `select` must return exactly K distinct items whenever the candidate set
    allows it; `observe` may be a no-op for static policies.
    """

    name: str

    def select(self, candidates, round_index: int) -> SlateSelection: ...

    def observe(self, selection: SlateSelection, rewards: np.ndarray) -> None: ...


def annotate_slate(slate: Slate, catalog: ItemCatalog) -> SlateSelection:
    """Fill in per-position marginal features for a slate chosen by any rule."""
    k = len(slate)
    z = np.zeros((k, catalog.relevance_dim))
    x = np.zeros((k, catalog.diversity_dim))
    for pos, item in enumerate(slate.items):
        prefix = slate.items[:pos]
        z[pos] = catalog.relevance[catalog.check_item(item)]
        x[pos] = diversity_marginal(item, prefix, catalog)
    return SlateSelection(slate=slate, relevance_features=z, diversity_features=x)


class StaticScorer:
    """Fixed per-item quality r_a = sigmoid(u_bar . z_a), cached over the catalog."""

    def __init__(self, u_bar: np.ndarray, catalog: ItemCatalog):
        u_bar = np.ascontiguousarray(u_bar, dtype=np.float64)
        if u_bar.shape != (catalog.relevance_dim,):
            raise DimensionMismatchError(
                f"u_bar has shape {u_bar.shape}, expected ({catalog.relevance_dim},)"
            )
        self.u_bar = u_bar
        logits = catalog.relevance @ u_bar
        self.quality = 1.0 / (1.0 + np.exp(-logits))
        self.quality.flags.writeable = False
        # unit rows for the MMR similarity penalty
        norms = np.linalg.norm(catalog.relevance, axis=1)
        safe = np.where(norms == 0.0, 1.0, norms)
        self._unit = catalog.relevance / safe[:, None]
        self._unit.flags.writeable = False

    def similarity_column(self, item: int, others: np.ndarray) -> np.ndarray:
        return self._unit[others] @ self._unit[item]


def _sorted_candidates(candidates, k: int) -> np.ndarray:
    cand = np.unique(np.asarray(list(candidates), dtype=np.intp))
    if k < 1 or cand.size < k:
        raise InsufficientCandidatesError(
            f"need {k} items but only {cand.size} candidates"
        )
    return cand


def logrank_select(scorer: StaticScorer, candidates, k: int) -> Slate:
    """Top-K candidates by quality, ties broken by smallest item id."""
    cand = _sorted_candidates(candidates, k)
    order = np.argsort(-scorer.quality[cand], kind="stable")
    return Slate(tuple(int(cand[i]) for i in order[:k]), capacity=k)


def mmr_select(
    scorer: StaticScorer,
    catalog: ItemCatalog,
    candidates,
    k: int,
    mmr_alpha: float = 0.9,
) -> Slate:
    """Maximal-marginal-relevance selection.

    Appends the argmax of  alpha * r_a - ((1 - alpha) / |A|) * sum_j sim(a, j)
    over the partial slate A; the penalty is defined as 0 when A is empty, so
    the first pick is the highest-quality item.
    """
    if not 0.0 <= mmr_alpha <= 1.0:
        raise ValueError(f"mmr_alpha must lie in [0, 1], got {mmr_alpha}")
    cand = _sorted_candidates(candidates, k)
    quality = scorer.quality[cand]
    sim_sum = np.zeros(cand.size)
    taken = np.zeros(cand.size, dtype=bool)
    chosen: list[int] = []
    for step in range(k):
        scores = mmr_alpha * quality
        if step > 0:
            scores = scores - (1.0 - mmr_alpha) / step * sim_sum
        scores[taken] = -np.inf
        pick = int(np.argmax(scores))
        taken[pick] = True
        item = int(cand[pick])
        chosen.append(item)
        sim_sum += scorer.similarity_column(item, cand)
    return Slate(tuple(chosen), capacity=k)


def epsilon_greedy_select(
    scorer: StaticScorer,
    candidates,
    k: int,
    epsilon: float = 0.05,
    rng: np.random.Generator | int = 0,
) -> Slate:
    """Per slot: explore uniformly with probability epsilon, else best quality."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    rng = as_rng(rng)
    cand = _sorted_candidates(candidates, k)
    quality = scorer.quality[cand].copy()
    remaining = list(range(cand.size))
    chosen: list[int] = []
    for _ in range(k):
        if rng.random() < epsilon:
            pick = remaining[int(rng.integers(len(remaining)))]
        else:
            scores = quality[remaining]
            pick = remaining[int(np.argmax(scores))]
        remaining.remove(pick)
        chosen.append(int(cand[pick]))
    return Slate(tuple(chosen), capacity=k)


class _StaticPolicy:
    """Shared plumbing: static policies log features but never learn."""

    def __init__(self, scorer: StaticScorer, catalog: ItemCatalog, k: int):
        self.scorer = scorer
        self.catalog = catalog
        self.k = k

    def observe(self, selection: SlateSelection, rewards: np.ndarray) -> None:
        pass


class LogRankPolicy(_StaticPolicy):
    name = "logrank"

    def select(self, candidates, round_index: int) -> SlateSelection:
        slate = logrank_select(self.scorer, candidates, self.k)
        return annotate_slate(slate, self.catalog)


class MmrPolicy(_StaticPolicy):
    name = "mmr"

    def __init__(
        self,
        scorer: StaticScorer,
        catalog: ItemCatalog,
        k: int,
        mmr_alpha: float = 0.9,
    ):
        super().__init__(scorer, catalog, k)
        self.mmr_alpha = mmr_alpha

    def select(self, candidates, round_index: int) -> SlateSelection:
        slate = mmr_select(
            self.scorer, self.catalog, candidates, self.k, self.mmr_alpha
        )
        return annotate_slate(slate, self.catalog)


class EpsilonGreedyPolicy(_StaticPolicy):
    name = "epsilon-greedy"

    def __init__(
        self,
        scorer: StaticScorer,
        catalog: ItemCatalog,
        k: int,
        epsilon: float = 0.05,
        rng: np.random.Generator | int = 0,
    ):
        super().__init__(scorer, catalog, k)
        self.epsilon = epsilon
        self.rng = as_rng(rng)

    def select(self, candidates, round_index: int) -> SlateSelection:
        slate = epsilon_greedy_select(
            self.scorer, candidates, self.k, self.epsilon, self.rng
        )
        return annotate_slate(slate, self.catalog)
