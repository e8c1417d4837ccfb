import numpy as np
import pytest

from dispersion_bandit.catalog import (
    ItemCatalog,
    PreferenceVector,
    TableDistanceMetric,
)


def random_table(rng, n):
    """Random symmetric non-negative distance table with zero diagonal."""
    raw = rng.uniform(0.0, 1.0, size=(n, n))
    table = np.triu(raw, k=1)
    return table + table.T


def random_catalog(rng, n_items, d=2, m=1):
    relevance = rng.uniform(-1.0, 1.0, size=(n_items, d))
    metrics = tuple(TableDistanceMetric(random_table(rng, n_items)) for _ in range(m))
    return ItemCatalog(relevance=relevance, metrics=metrics)


def random_eta(rng, d=2, m=1, nonneg=False):
    lo = 0.0 if nonneg else -1.0
    return PreferenceVector(
        theta=rng.uniform(lo, 1.0, size=d), beta=rng.uniform(0.0, 1.0, size=m)
    )


def utility_by_hand(items, theta, beta, relevance, tables):
    """Independent oracle: direct double loop over the utility definition."""
    total = 0.0
    for a in items:
        total += float(np.dot(theta, relevance[a]))
    for weight, table in zip(beta, tables):
        for i, a in enumerate(items):
            for b in items[i + 1 :]:
                total += float(weight) * float(table[a][b])
    return total


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
