"""Synthetic interaction data with a planted, recoverable preference signal.

Items get latent "appeal" and "irritant" features; users get a taste vector
over appeal and an aversion vector over irritants. The planted affinity is
taste . appeal - aversion . irritant plus Gaussian noise, and each user
labels their interactions positive above their own median affinity. Item
descriptions and shared entities are per-feature quartile buckets, so both
the text route and the entity-overlap graph carry the same planted structure
a working model should recover.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import RatingRecord
from .errors import ConfigError
from .kg import Triple

log = logging.getLogger(__name__)

POSITIVE_RATING = 5.0
NEGATIVE_RATING = 1.0
QUARTILES = (0.25, 0.5, 0.75)
OCTILES = tuple(i / 8 for i in range(1, 8))


@dataclass
class SyntheticTruth:
    """Ground truth behind a generated corpus, for oracle-style checks."""

    appeal: np.ndarray      # (items, prefer_dim)
    irritant: np.ndarray    # (items, dislike_dim)
    taste: np.ndarray       # (users, prefer_dim)
    aversion: np.ndarray    # (users, dislike_dim)
    affinity: dict          # (user_id, item_id) -> noisy planted score
    labels: dict            # (user_id, item_id) -> planted binary label


@dataclass
class SyntheticData:
    user_ids: list
    item_ids: list
    records: list           # RatingRecord rows, pipeline-ready
    triples: list           # Triple rows over quartile-bucket entities
    texts: dict             # item_id -> quartile-token description
    truth: SyntheticTruth


def _bucket_tokens(features: np.ndarray, prefix: str, quantiles, tag: str) -> list:
    """Per-item bucket token lists, one token per feature column."""
    edges = np.quantile(features, quantiles, axis=0)
    out = []
    for row in features:
        tokens = []
        for d, value in enumerate(row):
            bucket = int(np.searchsorted(edges[:, d], value, side="right"))
            tokens.append(f"{prefix}{d}{tag}{bucket}")
        out.append(tokens)
    return out


def generate_synthetic(cfg, seed=None) -> SyntheticData:
    """Build a planted corpus from the synth_* fields of a run configuration."""
    seed = cfg.seed if seed is None else seed
    users, items = cfg.synth_users, cfg.synth_items
    per_user = cfg.synth_interactions
    if users < 1 or items < 1:
        raise ConfigError(f"need positive user and item counts, got {users}, {items}")
    if per_user > items:
        raise ConfigError(
            f"cannot draw {per_user} distinct items from a catalog of {items}"
        )
    if per_user < 4:
        raise ConfigError(f"need at least 4 interactions per user, got {per_user}")
    user_ids = [f"u{i:04d}" for i in range(users)]
    item_ids = [f"i{i:04d}" for i in range(items)]

    feature_rng = np.random.default_rng([seed, 701])
    appeal = feature_rng.normal(size=(items, cfg.synth_prefer_dim))
    irritant = feature_rng.normal(size=(items, cfg.synth_dislike_dim))
    user_rng = np.random.default_rng([seed, 703])
    taste = user_rng.normal(size=(users, cfg.synth_prefer_dim))
    aversion = user_rng.normal(size=(users, cfg.synth_dislike_dim))

    records = []
    affinity = {}
    labels = {}
    for u in range(users):
        pick_rng = np.random.default_rng([seed, 707, u])
        chosen = pick_rng.choice(items, size=per_user, replace=False)
        noise = np.random.default_rng([seed, 709, u]).normal(size=per_user)
        scores = (appeal[chosen] @ taste[u] - irritant[chosen] @ aversion[u]
                  + cfg.synth_noise * noise)
        cut = float(np.median(scores))
        for idx, score in zip(chosen, scores):
            label = 1 if score > cut else 0
            key = (user_ids[u], item_ids[int(idx)])
            affinity[key] = float(score)
            labels[key] = label
            records.append(RatingRecord(
                user_ids[u], item_ids[int(idx)],
                POSITIVE_RATING if label else NEGATIVE_RATING,
            ))

    # the modalities are complementary on purpose: texts describe only the
    # appeal features, the shared-entity graph leans on the irritant features
    # (plus coarse appeal), so neither route alone recovers the whole signal
    appeal_q = _bucket_tokens(appeal, "p", QUARTILES, "q")
    appeal_o = _bucket_tokens(appeal, "p", OCTILES, "o")
    irritant_q = _bucket_tokens(irritant, "d", QUARTILES, "q")
    irritant_o = _bucket_tokens(irritant, "d", OCTILES, "o")
    texts = {}
    triples = []
    for i, item_id in enumerate(item_ids):
        texts[item_id] = " ".join(appeal_q[i] + appeal_o[i])
        for token in appeal_q[i] + irritant_q[i] + irritant_o[i]:
            triples.append(Triple(item_id, "shares", token))
    log.info("generated %d users, %d items, %d ratings, %d triples",
             users, items, len(records), len(triples))
    return SyntheticData(user_ids, item_ids, records, triples, texts,
                         SyntheticTruth(appeal, irritant, taste, aversion,
                                        affinity, labels))


def write_synthetic(data: SyntheticData, ratings_path, triples_path, texts_path) -> None:
    """Emit the corpus as the three ingestion files the CLI consumes."""
    with open(ratings_path, "w", encoding="utf-8") as handle:
        for r in data.records:
            handle.write(f"{r.user_id}\t{r.item_id}\t{r.rating:g}\n")
    with open(triples_path, "w", encoding="utf-8") as handle:
        for t in data.triples:
            handle.write(f"{t.head}\t{t.relation}\t{t.tail}\n")
    with open(texts_path, "w", encoding="utf-8") as handle:
        for item_id in data.item_ids:
            handle.write(f"{item_id}\t{data.texts[item_id]}\n")
