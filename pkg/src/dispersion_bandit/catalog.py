"""Ground set, feature model, marginal gains, and the slate utility.

The utility of an ordered item set A under preferences eta = [theta; beta] is

    F(A | eta) = sum_i theta_i * R_i(A)  +  sum_i beta_i * V_i(A)

where each R_i is modular (sums per-item relevance values) and each V_i is a
dispersion function (sums a pairwise distance over all unordered item pairs
in A).  Both marginal gains are locally linear in eta, which is what the
greedy selector and the bandit learner exploit:

    F(A + a | eta) - F(A | eta) = eta . [rel_marginal(a); div_marginal(a | A)]
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateItemError,
    InvalidItemError,
    UndefinedSimilarityError,
)

#: Ground sets up to this size get a precomputed L x L distance table;
#: larger ones fall back to on-demand evaluation from the vectors.
DEFAULT_TABLE_THRESHOLD = 4096

METRIC_MODES = ("raw", "slate-normalized")


def cosine_similarity(z_i: np.ndarray, z_j: np.ndarray) -> float:
    """Cosine similarity; raises on zero-norm inputs."""
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise DimensionMismatchError(
            f"vectors have shapes {z_i.shape} and {z_j.shape}"
        )
    ni = np.linalg.norm(z_i)
    nj = np.linalg.norm(z_j)
    if ni == 0.0 or nj == 0.0:
        raise UndefinedSimilarityError("cosine similarity of a zero-norm vector")
    return float(np.dot(z_i, z_j) / (ni * nj))


def cosine_distance(z_i: np.ndarray, z_j: np.ndarray) -> float:
    """1 - cosine similarity; lies in [0, 2]."""
    return 1.0 - cosine_similarity(z_i, z_j)


class DistanceMetric:
    """Symmetric, non-negative pairwise item distance with h(i, i) = 0."""

    def pair(self, i: int, j: int) -> float:
        raise NotImplementedError

    def column(self, item: int, others: np.ndarray) -> np.ndarray:
        """Distances h(item, j) for every j in `others` (vectorized path)."""
        return np.array([self.pair(item, int(j)) for j in others], dtype=np.float64)


class CosineDistanceMetric(DistanceMetric):
    """scale * (1 - cos_sim) over item relevance vectors.

    With `scale = 1` this is the plain cosine distance; the slate-normalized
    variant uses `scale = 2 / (K * (K - 1))` so that a full slate of capacity
    K accumulates the size-normalized average pair distance.

    A full table is precomputed when the ground set is small enough; the
    on-demand path evaluates the same dot products, so the two agree to
    floating-point noise (well within 1e-12).
    """

    def __init__(
        self,
        vectors: np.ndarray,
        scale: float = 1.0,
        table_threshold: int = DEFAULT_TABLE_THRESHOLD,
    ):
        vectors = np.ascontiguousarray(vectors, dtype=np.float64)
        if vectors.ndim != 2:
            raise DimensionMismatchError("metric vectors must be 2-dimensional")
        norms = np.linalg.norm(vectors, axis=1)
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise UndefinedSimilarityError(
                f"items {zero[:5].tolist()} have zero-norm vectors"
            )
        self.scale = float(scale)
        self._unit = vectors / norms[:, None]
        self._unit.flags.writeable = False
        self._table: np.ndarray | None = None
        if len(vectors) <= table_threshold:
            table = self.scale * (1.0 - self._unit @ self._unit.T)
            table = np.triu(table, k=1)
            table = table + table.T  # exact symmetry, zero diagonal
            np.clip(table, 0.0, None, out=table)
            table.flags.writeable = False
            self._table = table

    def __len__(self) -> int:
        return len(self._unit)

    def pair(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        if self._table is not None:
            return float(self._table[i, j])
        lo, hi = (i, j) if i < j else (j, i)  # orientation-stable on demand
        d = self.scale * (1.0 - float(np.dot(self._unit[lo], self._unit[hi])))
        return max(d, 0.0)

    def column(self, item: int, others: np.ndarray) -> np.ndarray:
        others = np.asarray(others, dtype=np.intp)
        if self._table is not None:
            return self._table[item, others].astype(np.float64, copy=True)
        col = self.scale * (1.0 - self._unit[others] @ self._unit[item])
        np.clip(col, 0.0, None, out=col)
        col[others == item] = 0.0
        return col


class TableDistanceMetric(DistanceMetric):
    """Distance metric backed by an explicit symmetric table."""

    def __init__(self, table: np.ndarray):
        table = np.ascontiguousarray(table, dtype=np.float64)
        if table.ndim != 2 or table.shape[0] != table.shape[1]:
            raise DimensionMismatchError("distance table must be square")
        if not np.array_equal(table, table.T):
            raise ValueError("distance table must be symmetric")
        if np.any(table < 0.0):
            raise ValueError("distances must be non-negative")
        if np.any(np.diagonal(table) != 0.0):
            raise ValueError("self-distance must be zero")
        table.flags.writeable = False
        self._table = table

    def __len__(self) -> int:
        return len(self._table)

    def pair(self, i: int, j: int) -> float:
        return float(self._table[i, j])

    def column(self, item: int, others: np.ndarray) -> np.ndarray:
        others = np.asarray(others, dtype=np.intp)
        return self._table[item, others].astype(np.float64, copy=True)


def cosine_metric(
    vectors: np.ndarray,
    mode: str = "slate-normalized",
    slate_capacity: int | None = None,
    table_threshold: int = DEFAULT_TABLE_THRESHOLD,
) -> CosineDistanceMetric:
    """Build the experiment distance metric in one of two modes.

    `raw`:              h = 1 - cos_sim
    `slate-normalized`: h = (1 - cos_sim) * 2 / (K * (K - 1))

    The slate-normalized mode fixes the normalizer at the slate capacity K so
    that h stays a genuine pairwise metric while matching the scale of the
    size-normalized average pair distance on full slates.
    """
    if mode not in METRIC_MODES:
        raise ValueError(f"unknown metric mode {mode!r}; expected one of {METRIC_MODES}")
    if mode == "raw":
        scale = 1.0
    else:
        if slate_capacity is None or slate_capacity < 2:
            raise ValueError("slate-normalized mode needs a slate capacity >= 2")
        scale = 2.0 / (slate_capacity * (slate_capacity - 1))
    return CosineDistanceMetric(vectors, scale=scale, table_threshold=table_threshold)


@dataclass(frozen=True)
class Slate:
    """Ordered list of distinct item ids, at most `capacity` long."""

    items: tuple[int, ...]
    capacity: int

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(int(a) for a in self.items))
        if self.capacity < 1:
            raise ValueError("slate capacity must be positive")
        if len(self.items) > self.capacity:
            raise ValueError(
                f"slate has {len(self.items)} items, capacity {self.capacity}"
            )
        if len(set(self.items)) != len(self.items):
            raise DuplicateItemError(f"slate contains duplicates: {self.items}")

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item: int) -> bool:
        return item in self.items


@dataclass(frozen=True)
class PreferenceVector:
    """eta = [theta; beta]: relevance and diversity preference weights."""

    theta: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        theta = np.ascontiguousarray(self.theta, dtype=np.float64)
        beta = np.ascontiguousarray(self.beta, dtype=np.float64)
        if theta.ndim != 1 or beta.ndim != 1:
            raise DimensionMismatchError("theta and beta must be 1-dimensional")
        theta.flags.writeable = False
        beta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)

    @property
    def stacked(self) -> np.ndarray:
        """Concatenated [theta; beta] of length d + m."""
        return np.concatenate([self.theta, self.beta])


@dataclass(frozen=True)
class ItemCatalog:
    """Immutable ground set: per-item relevance vectors plus m distance metrics.

    Item ids are the dense range 0..L-1.  Safe to share across threads and
    processes; every operation over it is a pure function.
    """

    relevance: np.ndarray
    metrics: tuple[DistanceMetric, ...]

    def __post_init__(self):
        relevance = np.ascontiguousarray(self.relevance, dtype=np.float64)
        if relevance.ndim != 2 or relevance.shape[0] < 1 or relevance.shape[1] < 1:
            raise DimensionMismatchError("relevance must be a non-empty L x d array")
        relevance.flags.writeable = False
        object.__setattr__(self, "relevance", relevance)
        metrics = tuple(self.metrics)
        if not metrics:
            raise DimensionMismatchError("at least one distance metric is required")
        for metric in metrics:
            if hasattr(metric, "__len__") and len(metric) != relevance.shape[0]:
                raise DimensionMismatchError(
                    "metric covers a different number of items than the catalog"
                )
        object.__setattr__(self, "metrics", metrics)

    @property
    def item_count(self) -> int:
        return self.relevance.shape[0]

    @property
    def relevance_dim(self) -> int:
        return self.relevance.shape[1]

    @property
    def diversity_dim(self) -> int:
        return len(self.metrics)

    def all_items(self) -> np.ndarray:
        return np.arange(self.item_count)

    def check_item(self, item: int) -> int:
        item = int(item)
        if not 0 <= item < self.item_count:
            raise InvalidItemError(
                f"item {item} outside ground set of size {self.item_count}"
            )
        return item

    def check_eta(self, eta: PreferenceVector) -> None:
        if eta.theta.shape[0] != self.relevance_dim:
            raise DimensionMismatchError(
                f"theta has length {eta.theta.shape[0]}, catalog d={self.relevance_dim}"
            )
        if eta.beta.shape[0] != self.diversity_dim:
            raise DimensionMismatchError(
                f"beta has length {eta.beta.shape[0]}, catalog m={self.diversity_dim}"
            )


def _slate_items(slate: Slate | Sequence[int]) -> tuple[int, ...]:
    if isinstance(slate, Slate):
        return slate.items
    return tuple(int(a) for a in slate)


def relevance_marginal(
    item: int, slate: Slate | Sequence[int], catalog: ItemCatalog
) -> np.ndarray:
    """Relevance gain of appending `item`: its feature row, independent of A."""
    item = catalog.check_item(item)
    if item in _slate_items(slate):
        raise DuplicateItemError(f"item {item} already in slate")
    return catalog.relevance[item].copy()


def diversity_marginal(
    item: int, slate: Slate | Sequence[int], catalog: ItemCatalog
) -> np.ndarray:
    """Diversity gain of appending `item`: sum of distances to the slate.

    Component i is sum_{j in A} h_i(item, j); the zero vector for empty A.
    """
    item = catalog.check_item(item)
    items = _slate_items(slate)
    if item in items:
        raise DuplicateItemError(f"item {item} already in slate")
    gain = np.zeros(catalog.diversity_dim)
    if items:
        ids = np.asarray(items, dtype=np.intp)
        for i, metric in enumerate(catalog.metrics):
            gain[i] = metric.column(item, ids).sum()
    return gain


def joint_marginal(
    item: int, slate: Slate | Sequence[int], catalog: ItemCatalog
) -> np.ndarray:
    """Concatenated [relevance_marginal; diversity_marginal], length d + m.

    eta . joint_marginal(a | A) equals F(A + a | eta) - F(A | eta).
    """
    return np.concatenate(
        [
            relevance_marginal(item, slate, catalog),
            diversity_marginal(item, slate, catalog),
        ]
    )


def utility(
    slate: Slate | Sequence[int], eta: PreferenceVector, catalog: ItemCatalog
) -> float:
    """F(A | eta); order-independent, 0.0 for the empty slate."""
    catalog.check_eta(eta)
    items = _slate_items(slate)
    if len(set(items)) != len(items):
        raise DuplicateItemError(f"slate contains duplicates: {items}")
    if not items:
        return 0.0
    ids = np.asarray([catalog.check_item(a) for a in items], dtype=np.intp)
    value = float(catalog.relevance[ids].sum(axis=0) @ eta.theta)
    for beta_i, metric in zip(eta.beta, catalog.metrics):
        pair_sum = 0.0
        for k in range(1, len(ids)):
            pair_sum += float(metric.column(int(ids[k]), ids[:k]).sum())
        value += float(beta_i) * pair_sum
    return value


def guarantee_preconditions(eta: PreferenceVector, catalog: ItemCatalog) -> bool:
    """True iff theta.z_a >= 0 for every item and beta is element-wise >= 0.

    Under these conditions the greedy selector is guaranteed a 1/4 fraction of
    the optimal utility.  Checked explicitly, never silently assumed.
    """
    catalog.check_eta(eta)
    if np.any(eta.beta < 0.0):
        return False
    return bool(np.all(catalog.relevance @ eta.theta >= 0.0))
