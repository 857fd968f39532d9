"""Interaction data pipeline: parsing, binarization, splits, and sampling.

Ratings become per-user binary labels (liked iff the rating strictly exceeds
that user's mean), get a per-user train/validation/test split, and feed
fixed-size prefer/dislike history samples plus negative-sampled training
examples. All randomness flows through numpy generators seeded per call.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IngestionError, VocabularyError

log = logging.getLogger(__name__)

TRAIN, VALIDATION, TEST = "train", "validation", "test"


@dataclass
class RatingRecord:
    user_id: str
    item_id: str
    rating: float


@dataclass
class ParsedRatings:
    records: list
    malformed: list  # (line number, reason) pairs


@dataclass
class UserHistory:
    """Fixed-size samples of one user's train-split items, one list per view."""

    user_id: str
    prefer_items: list
    dislike_items: list


@dataclass
class TrainExample:
    user_id: str
    positive_item: int
    negative_items: list


class InteractionDataset:
    """Binarized user-item interactions with optional split tags.

    Users and items are indexed by their position in `user_ids` / `item_ids`;
    `labels` maps (user index, item index) to 0 or 1 for every interaction.
    """

    def __init__(self, user_ids, item_ids, labels, user_mean, splits=None):
        self.user_ids = list(user_ids)
        self.item_ids = list(item_ids)
        self.user_index = {u: k for k, u in enumerate(self.user_ids)}
        self.item_index = {i: k for k, i in enumerate(self.item_ids)}
        self.labels = dict(labels)
        self.user_mean = dict(user_mean)
        self.splits = dict(splits) if splits is not None else None
        self._by_user = {}
        for (u, i) in self.labels:
            self._by_user.setdefault(u, []).append(i)
        for items in self._by_user.values():
            items.sort()

    @property
    def n_users(self):
        return len(self.user_ids)

    @property
    def n_items(self):
        return len(self.item_ids)

    def items_of(self, user: int) -> list:
        return self._by_user.get(user, [])

    def split_items(self, user: int, split: str, label=None) -> list:
        if self.splits is None:
            raise ConfigError("dataset has no split tags yet; call split() first")
        out = []
        for i in self.items_of(user):
            if self.splits[(user, i)] != split:
                continue
            if label is not None and self.labels[(user, i)] != label:
                continue
            out.append(i)
        return out

    def counts(self) -> dict:
        positive = sum(self.labels.values())
        total = len(self.labels)
        return {
            "users": self.n_users,
            "items": self.n_items,
            "ratings": total,
            "positive": positive,
            "negative": total - positive,
            "sparsity": total / (self.n_users * self.n_items) if total else 0.0,
        }

    def with_splits(self, splits) -> "InteractionDataset":
        return InteractionDataset(self.user_ids, self.item_ids, self.labels, self.user_mean, splits)


def parse_ratings(path, delimiter="\t", rating_min=None, rating_max=None) -> ParsedRatings:
    """Read `user item rating [timestamp]` lines; tolerate up to 1% malformed.

    Malformed lines (wrong field count, non-numeric or out-of-range rating)
    are collected with their line numbers; beyond 1% of the file the whole
    ingestion is rejected.
    """
    records = []
    malformed = []
    total = 0
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read ratings file {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            total += 1
            parts = line.split(delimiter)
            if len(parts) not in (3, 4):
                malformed.append((line_no, f"expected 3 or 4 fields, got {len(parts)}"))
                continue
            user_id, item_id = parts[0].strip(), parts[1].strip()
            if not user_id or not item_id:
                malformed.append((line_no, "empty user or item id"))
                continue
            try:
                rating = float(parts[2])
            except ValueError:
                malformed.append((line_no, f"non-numeric rating {parts[2]!r}"))
                continue
            if not np.isfinite(rating):
                malformed.append((line_no, "non-finite rating"))
                continue
            if rating_min is not None and rating < rating_min:
                malformed.append((line_no, f"rating {rating} below {rating_min}"))
                continue
            if rating_max is not None and rating > rating_max:
                malformed.append((line_no, f"rating {rating} above {rating_max}"))
                continue
            records.append(RatingRecord(user_id, item_id, rating))
    if total and len(malformed) / total > 0.01:
        shown = ", ".join(str(n) for n, _ in malformed[:20])
        raise IngestionError(
            f"{len(malformed)} of {total} lines malformed (>1%); first line numbers: {shown}"
        )
    return ParsedRatings(records=records, malformed=malformed)


def binarize(records, min_records=10) -> InteractionDataset:
    """Label each kept rating 1 iff it strictly exceeds the user's own mean.

    Users with fewer than `min_records` ratings are dropped entirely; a
    rating exactly at the mean counts as a dislike. Duplicate (user, item)
    pairs keep the last rating seen.
    """
    per_user = {}
    for rec in records:
        per_user.setdefault(rec.user_id, {})[rec.item_id] = rec.rating
    kept = {u: ratings for u, ratings in per_user.items() if len(ratings) >= min_records}
    dropped = len(per_user) - len(kept)
    if dropped:
        log.info("binarize: dropped %d users with fewer than %d records", dropped, min_records)

    user_ids = sorted(kept)
    item_ids = sorted({i for ratings in kept.values() for i in ratings})
    item_index = {i: k for k, i in enumerate(item_ids)}
    labels = {}
    user_mean = {}
    for u_idx, u in enumerate(user_ids):
        ratings = kept[u]
        avg = sum(ratings.values()) / len(ratings)
        user_mean[u_idx] = avg
        for item_id, rating in ratings.items():
            labels[(u_idx, item_index[item_id])] = 1 if rating > avg else 0
    return InteractionDataset(user_ids, item_ids, labels, user_mean)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split(dataset, train_fraction=0.7, validation_fraction=0.1, seed=0) -> InteractionDataset:
    """Per-user split: `train_fraction` to the train side (a tenth of which
    becomes validation by default), the rest to test.

    Best effort, reported via the log when impossible: each user's test set
    should contain both labels whenever the user has both overall.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if not 0.0 <= validation_fraction < 1.0:
        raise ConfigError(f"validation_fraction must lie in [0, 1), got {validation_fraction}")
    rng = np.random.default_rng([seed, 101])
    splits = {}
    unbalanced = []
    for u in range(dataset.n_users):
        items = dataset.items_of(u)
        order = [items[k] for k in rng.permutation(len(items))]
        n_train_side = _round_half_up(train_fraction * len(order))
        train_side = order[:n_train_side]
        test = order[n_train_side:]

        user_labels = {dataset.labels[(u, i)] for i in items}
        if test and len(user_labels) == 2:
            test_labels = {dataset.labels[(u, i)] for i in test}
            if len(test_labels) == 1:
                missing = (user_labels - test_labels).pop()
                donors = [i for i in train_side if dataset.labels[(u, i)] == missing]
                if donors:
                    donor = donors[0]
                    swapped = test[0]
                    train_side[train_side.index(donor)] = swapped
                    test[test.index(swapped)] = donor
                else:
                    unbalanced.append(dataset.user_ids[u])
        n_val = _round_half_up(validation_fraction * len(train_side))
        for i in train_side[:n_val]:
            splits[(u, i)] = VALIDATION
        for i in train_side[n_val:]:
            splits[(u, i)] = TRAIN
        for i in test:
            splits[(u, i)] = TEST
    if unbalanced:
        log.warning("split: %d users could not get both labels into test: %s",
                    len(unbalanced), ", ".join(unbalanced[:10]))
    return dataset.with_splits(splits)


def build_history(dataset, user: int, size: int, seed=0) -> UserHistory:
    """Sample `size` prefer and `size` dislike train items for one user.

    Pools at least `size` strong are sampled without replacement, smaller
    non-empty pools with replacement; an empty pool raises VocabularyError
    (the caller excludes the user from training).
    """
    if size < 1:
        raise ConfigError(f"history size must be positive, got {size}")
    rng = np.random.default_rng([seed, 211, user])
    samples = []
    for label, view in ((1, "prefer"), (0, "dislike")):
        pool = dataset.split_items(user, TRAIN, label=label)
        if not pool:
            raise VocabularyError(
                f"user {dataset.user_ids[user]} has no {view} items in the train split"
            )
        replace = len(pool) < size
        picked = rng.choice(np.asarray(pool, dtype=np.intp), size=size, replace=replace)
        samples.append([int(i) for i in picked])
    return UserHistory(dataset.user_ids[user], samples[0], samples[1])


def partial_history(dataset, user: int, size: int, seed=0) -> UserHistory:
    """build_history that tolerates empty pools, for the evaluation cohort.

    Draws from the same RNG key, so users who do hold both views get exactly
    the history they trained with.
    """
    rng = np.random.default_rng([seed, 211, user])
    samples = []
    for label in (1, 0):
        pool = dataset.split_items(user, TRAIN, label=label)
        if not pool:
            samples.append([])
            continue
        replace = len(pool) < size
        picked = rng.choice(np.asarray(pool, dtype=np.intp), size=size, replace=replace)
        samples.append([int(i) for i in picked])
    return UserHistory(dataset.user_ids[user], samples[0], samples[1])


def build_histories(dataset, size: int, seed=0) -> dict:
    """Histories for every user with both views available; the rest are logged."""
    histories = {}
    excluded = []
    for u in range(dataset.n_users):
        try:
            histories[u] = build_history(dataset, u, size, seed=seed)
        except VocabularyError:
            excluded.append(dataset.user_ids[u])
    if excluded:
        log.info("build_histories: excluded %d users lacking a view: %s",
                 len(excluded), ", ".join(excluded[:10]))
    return histories


def build_combined_history(dataset, user: int, size: int, seed=0) -> list:
    """Single-view variant: `size` items sampled from all of the user's train items."""
    if size < 1:
        raise ConfigError(f"history size must be positive, got {size}")
    pool = dataset.split_items(user, TRAIN)
    if not pool:
        raise VocabularyError(f"user {dataset.user_ids[user]} has no train items")
    rng = np.random.default_rng([seed, 223, user])
    picked = rng.choice(np.asarray(pool, dtype=np.intp), size=size, replace=len(pool) < size)
    return [int(i) for i in picked]


def sample_training_batches(dataset, histories, negatives: int, batch_size: int, seed=0) -> list:
    """One epoch of training batches, deterministic in `seed`.

    Scheduled users (those present in `histories`) are visited in shuffled
    order; every positive train item yields one example whose negatives are
    drawn uniformly from the user's train-split dislikes, with replacement
    only when that pool is smaller than `negatives`.
    """
    if negatives < 1:
        raise ConfigError(f"negative count must be positive, got {negatives}")
    if batch_size < 1:
        raise ConfigError(f"batch size must be positive, got {batch_size}")
    rng = np.random.default_rng([seed, 307])
    users = sorted(histories)
    examples = []
    for u in (users[k] for k in rng.permutation(len(users))):
        positives = dataset.split_items(u, TRAIN, label=1)
        dislikes = np.asarray(dataset.split_items(u, TRAIN, label=0), dtype=np.intp)
        if not positives or dislikes.size == 0:
            continue
        order = rng.permutation(len(positives))
        for k in order:
            neg = rng.choice(dislikes, size=negatives, replace=dislikes.size < negatives)
            examples.append(TrainExample(
                user_id=dataset.user_ids[u],
                positive_item=positives[k],
                negative_items=[int(i) for i in neg],
            ))
    return [examples[k:k + batch_size] for k in range(0, len(examples), batch_size)]


def dataset_manifest(dataset) -> str:
    """Line-oriented key=value summary of the dataset counts."""
    c = dataset.counts()
    lines = [
        f"users={c['users']}",
        f"items={c['items']}",
        f"ratings={c['ratings']}",
        f"positive={c['positive']}",
        f"negative={c['negative']}",
        f"sparsity={c['sparsity']:.6f}",
    ]
    return "\n".join(lines) + "\n"


def save_dataset(dataset, path) -> None:
    records = []
    for (u, i), label in sorted(dataset.labels.items()):
        row = [dataset.user_ids[u], dataset.item_ids[i], label]
        if dataset.splits is not None:
            row.append(dataset.splits[(u, i)])
        records.append(row)
    payload = {
        "users": dataset.user_ids,
        "items": dataset.item_ids,
        "user_mean": {dataset.user_ids[u]: m for u, m in sorted(dataset.user_mean.items())},
        "records": records,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, sort_keys=True, separators=(",", ":"))
        handle.write("\n")


def load_dataset(path) -> InteractionDataset:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    user_index = {u: k for k, u in enumerate(payload["users"])}
    item_index = {i: k for k, i in enumerate(payload["items"])}
    labels = {}
    splits = {}
    tagged = False
    for row in payload["records"]:
        key = (user_index[row[0]], item_index[row[1]])
        labels[key] = int(row[2])
        if len(row) > 3:
            splits[key] = row[3]
            tagged = True
    user_mean = {user_index[u]: float(m) for u, m in payload["user_mean"].items()}
    return InteractionDataset(
        payload["users"], payload["items"], labels, user_mean,
        splits=splits if tagged else None,
    )
