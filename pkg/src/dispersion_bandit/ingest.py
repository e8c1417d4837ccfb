"""Rating-file parsing, user splitting, and item-embedding handling.

Parsing keeps only strictly-positive feedback (rating > threshold), then
deduplicates (user, item) pairs keeping the highest rating, then re-indexes
users and items densely in ascending original-id order.  Counts of every
dropped record are retained so `kept + filtered + duplicates` always equals
the number of data lines read.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmptyDatasetError, ParseError
from .seeding import rng_from_seed

FORMATS = ("ml100k-tab", "ml1m-colons", "generic-csv")

# CLI-friendly aliases for the canonical format tags
FORMAT_ALIASES = {
    "ml100k": "ml100k-tab",
    "ml1m": "ml1m-colons",
    "generic": "generic-csv",
}


def canonical_format(name: str) -> str:
    tag = FORMAT_ALIASES.get(name, name)
    if tag not in FORMATS:
        raise ValueError(f"unknown ratings format {name!r}; expected one of {FORMATS}")
    return tag


@dataclass(frozen=True)
class InteractionTable:
    """Thresholded, deduplicated, densely re-indexed interactions."""

    users: np.ndarray  # dense user index per record
    items: np.ndarray  # dense item index per record
    ratings: np.ndarray
    timestamps: np.ndarray | None
    user_ids: np.ndarray  # dense -> original user id (ascending)
    item_ids: np.ndarray  # dense -> original item id (ascending)
    source: str
    format: str
    raw_lines: int
    filtered_count: int
    duplicate_count: int

    @property
    def n_users(self) -> int:
        return int(self.user_ids.shape[0])

    @property
    def n_items(self) -> int:
        return int(self.item_ids.shape[0])

    @property
    def n_interactions(self) -> int:
        return int(self.users.shape[0])

    def items_of(self, dense_user: int) -> np.ndarray:
        return np.sort(self.items[self.users == dense_user])


def _split_line(line: str, sep: str, line_number: int) -> list[str]:
    parts = line.rstrip("\n").rstrip("\r").split(sep)
    if len(parts) < 3:
        raise ParseError(
            f"expected at least 3 {sep!r}-separated fields, got {len(parts)}",
            line_number=line_number,
        )
    return parts


def _parse_record(parts: list[str], line_number: int) -> tuple[int, int, float, int | None]:
    try:
        user = int(parts[0])
        item = int(parts[1])
        rating = float(parts[2])
    except ValueError as exc:
        raise ParseError(
            f"could not parse user/item/rating from {parts[:3]!r}",
            line_number=line_number,
        ) from exc
    ts: int | None = None
    if len(parts) > 3 and parts[3] != "":
        try:
            ts = int(parts[3])
        except ValueError as exc:
            raise ParseError(
                f"bad timestamp {parts[3]!r}", line_number=line_number
            ) from exc
    return user, item, rating, ts


def parse_ratings(path, format: str, positive_threshold: float = 3.0) -> InteractionTable:
    """Read a ratings file, keep ratings strictly above the threshold."""
    tag = canonical_format(format)
    records: list[tuple[int, int, float, int | None]] = []
    raw_lines = 0
    filtered = 0

    with open(path, newline="") as fh:
        if tag == "generic-csv":
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise EmptyDatasetError(f"{path} is empty") from None
            expected = ["user", "item", "rating"]
            if [h.strip().lower() for h in header[:3]] != expected:
                raise ParseError(
                    f"header must start with user,item,rating — got {header!r}",
                    line_number=1,
                )
            for line_number, row in enumerate(reader, start=2):
                if not row:
                    continue
                raw_lines += 1
                if len(row) < 3:
                    raise ParseError(
                        f"expected at least 3 fields, got {len(row)}",
                        line_number=line_number,
                    )
                user, item, rating, ts = _parse_record(row, line_number)
                if rating > positive_threshold:
                    records.append((user, item, rating, ts))
                else:
                    filtered += 1
        else:
            sep = "\t" if tag == "ml100k-tab" else "::"
            for line_number, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                raw_lines += 1
                parts = _split_line(line, sep, line_number)
                user, item, rating, ts = _parse_record(parts, line_number)
                if rating > positive_threshold:
                    records.append((user, item, rating, ts))
                else:
                    filtered += 1

    if not records:
        raise EmptyDatasetError(
            f"no interactions with rating > {positive_threshold} in {path}"
        )

    # deduplicate (user, item), keeping the highest rating
    best: dict[tuple[int, int], tuple[float, int | None]] = {}
    duplicates = 0
    for user, item, rating, ts in records:
        key = (user, item)
        kept = best.get(key)
        if kept is None:
            best[key] = (rating, ts)
        else:
            duplicates += 1
            if rating > kept[0]:
                best[key] = (rating, ts)

    keys = sorted(best)
    users_orig = np.array([k[0] for k in keys], dtype=np.int64)
    items_orig = np.array([k[1] for k in keys], dtype=np.int64)
    ratings = np.array([best[k][0] for k in keys], dtype=np.float64)
    ts_values = [best[k][1] for k in keys]
    timestamps = (
        None
        if any(v is None for v in ts_values)
        else np.array(ts_values, dtype=np.int64)
    )

    user_ids = np.unique(users_orig)
    item_ids = np.unique(items_orig)
    users = np.searchsorted(user_ids, users_orig)
    items = np.searchsorted(item_ids, items_orig)

    return InteractionTable(
        users=users,
        items=items,
        ratings=ratings,
        timestamps=timestamps,
        user_ids=user_ids,
        item_ids=item_ids,
        source=str(path),
        format=tag,
        raw_lines=raw_lines,
        filtered_count=filtered,
        duplicate_count=duplicates,
    )


@dataclass(frozen=True)
class SplitSpec:
    """Seeded user split; the first floor(fraction * U) shuffled users train."""

    seed: int
    train_fraction: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(
                f"train_fraction must lie in (0, 1), got {self.train_fraction}"
            )


def subtable(table: InteractionTable, dense_users) -> InteractionTable:
    """Records of the given users, with users re-indexed within the subset.

    The item index space is left untouched — items keep their parent dense
    ids even if a split holds no record for them — so embedding matrices and
    catalogs built on the parent remain valid for both splits.
    """
    mask = np.isin(table.users, np.asarray(dense_users))
    users_orig = table.user_ids[table.users[mask]]
    user_ids = np.unique(users_orig)
    kept = int(mask.sum())
    return InteractionTable(
        users=np.searchsorted(user_ids, users_orig),
        items=table.items[mask],
        ratings=table.ratings[mask],
        timestamps=None if table.timestamps is None else table.timestamps[mask],
        user_ids=user_ids,
        item_ids=table.item_ids,
        source=table.source,
        format=table.format,
        raw_lines=kept,
        filtered_count=0,
        duplicate_count=0,
    )


def split_users(
    table: InteractionTable, spec: SplitSpec
) -> tuple[InteractionTable, InteractionTable]:
    """Seeded shuffle of users; first floor(fraction * U) train, rest test."""
    if table.n_users < 2:
        raise EmptyDatasetError("need at least 2 users to split")
    rng = rng_from_seed(spec.seed)
    order = rng.permutation(table.n_users)
    cut = int(table.n_users * spec.train_fraction)
    return subtable(table, order[:cut]), subtable(table, order[cut:])


def filter_top_items(table: InteractionTable, n: int) -> InteractionTable:
    """Keep the n most-interacted items (ties to the smaller original id).

    Users and items are re-indexed densely again; users whose records all
    land on dropped items disappear from the result.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    counts = np.bincount(table.items, minlength=table.n_items)
    # sort by (-count, original id): stable argsort on the negated counts
    order = np.argsort(-counts, kind="stable")
    kept_dense = np.sort(order[: min(n, table.n_items)])
    mask = np.isin(table.items, kept_dense)
    if not np.any(mask):
        raise EmptyDatasetError("top-items filter removed every record")

    users_orig = table.user_ids[table.users[mask]]
    items_orig = table.item_ids[table.items[mask]]
    user_ids = np.unique(users_orig)
    item_ids = np.unique(items_orig)
    return InteractionTable(
        users=np.searchsorted(user_ids, users_orig),
        items=np.searchsorted(item_ids, items_orig),
        ratings=table.ratings[mask],
        timestamps=None if table.timestamps is None else table.timestamps[mask],
        user_ids=user_ids,
        item_ids=item_ids,
        source=table.source,
        format=table.format,
        raw_lines=table.raw_lines,
        filtered_count=table.filtered_count + int(np.sum(~mask)),
        duplicate_count=table.duplicate_count,
    )


@dataclass(frozen=True)
class EmbeddingTable:
    """Item vectors plus the per-dimension affine map used to normalize them."""

    item_ids: np.ndarray  # original ids, ascending
    vectors: np.ndarray  # normalized rows, coordinates in [-1, 1]
    mins: np.ndarray  # raw per-dimension minima
    maxs: np.ndarray  # raw per-dimension maxima

    @property
    def d(self) -> int:
        return int(self.vectors.shape[1])

    def vector(self, original_id: int) -> np.ndarray:
        idx = np.searchsorted(self.item_ids, original_id)
        if idx >= self.item_ids.shape[0] or self.item_ids[idx] != original_id:
            raise KeyError(f"no embedding for item {original_id}")
        return self.vectors[idx]

    def matrix_for(self, original_ids) -> np.ndarray:
        """Rows for the given original ids, in the given order."""
        return np.vstack([self.vector(int(i)) for i in original_ids])

    def denormalize(self, normalized: np.ndarray) -> np.ndarray:
        span = self.maxs - self.mins
        return np.where(
            span == 0.0, self.mins, (normalized + 1.0) / 2.0 * span + self.mins
        )


def normalize_embeddings(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Min-max map each dimension onto [-1, 1]; constant dimensions go to 0."""
    mins = raw.min(axis=0)
    maxs = raw.max(axis=0)
    span = maxs - mins
    safe = np.where(span == 0.0, 1.0, span)
    normalized = 2.0 * (raw - mins) / safe - 1.0
    normalized[:, span == 0.0] = 0.0
    return normalized, mins, maxs


def load_embeddings(path, expected_d: int, expected_items=None) -> EmbeddingTable:
    """Read `item,e0,...,e{d-1}` rows keyed by original item id; normalize."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        expected_header = ["item"] + [f"e{i}" for i in range(expected_d)]
        if [h.strip() for h in header] != expected_header:
            raise ParseError(
                f"header must be {','.join(expected_header)} — got {header!r}",
                line_number=1,
            )
        rows: dict[int, np.ndarray] = {}
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != expected_d + 1:
                raise ParseError(
                    f"expected {expected_d + 1} fields, got {len(row)}",
                    line_number=line_number,
                )
            try:
                item = int(row[0])
                values = np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(
                    f"bad embedding row {row!r}", line_number=line_number
                ) from exc
            if item in rows:
                raise ParseError(
                    f"duplicate embedding for item {item}", line_number=line_number
                )
            rows[item] = values

    if not rows:
        raise EmptyDatasetError(f"no embedding rows in {path}")
    if expected_items is not None:
        missing = sorted(set(int(i) for i in expected_items) - set(rows))
        if missing:
            raise ParseError(
                f"{len(missing)} item(s) lack embeddings, first few: {missing[:5]}"
            )

    item_ids = np.array(sorted(rows), dtype=np.int64)
    raw = np.vstack([rows[int(i)] for i in item_ids])
    normalized, mins, maxs = normalize_embeddings(raw)
    return EmbeddingTable(item_ids=item_ids, vectors=normalized, mins=mins, maxs=maxs)


def synthetic_embeddings(
    n_items: int, d: int, low: float, high: float, seed: int
) -> EmbeddingTable:
    """I.i.d. uniform vectors, ids 0..n_items-1, deterministic per seed.

    The stored affine map is the identity (the draws are used as-is), which
    keeps `denormalize` a no-op; the coordinates already live in [-1, 1]
    whenever [low, high] does.
    """
    if n_items < 1 or d < 1:
        raise ValueError("n_items and d must be >= 1")
    if not low < high:
        raise ValueError(f"need low < high, got [{low}, {high}]")
    rng = rng_from_seed(seed)
    vectors = rng.uniform(low, high, size=(n_items, d))
    return EmbeddingTable(
        item_ids=np.arange(n_items, dtype=np.int64),
        vectors=vectors,
        mins=-np.ones(d),
        maxs=np.ones(d),
    )


def write_maps(table: InteractionTable, users_path, items_path) -> None:
    """Emit the dense->original re-indexing maps as two-column CSVs."""
    for path, ids in ((users_path, table.user_ids), (items_path, table.item_ids)):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["dense", "original"])
            for dense, original in enumerate(ids):
                writer.writerow([dense, int(original)])
