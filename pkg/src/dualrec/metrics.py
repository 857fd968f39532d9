"""Ranking metrics and the end-to-end evaluation harness.

AUC uses the average-rank formulation, which reproduces the pairwise
comparison count (ties worth one half) exactly in float64. NDCG uses binary
gains with the 1/log2(rank+1) discount, computed per user and averaged over
users whose candidate list holds at least one positive.
"""

from __future__ import annotations

import dataclasses
import logging
import math

import numpy as np

from . import data as data_mod
from .errors import ConfigError, UndefinedMetricError
from .train import Checkpoint, model_from_checkpoint, train

log = logging.getLogger(__name__)

DEFAULT_NDCG_KS = (5, 10)


def auc(scored) -> float:
    """Area under the ROC curve from (score, label) pairs.

    Equal scores across classes count half. Raises UndefinedMetricError when
    only one class is present.
    """
    pairs = list(scored)
    scores = np.asarray([s for s, _ in pairs], dtype=np.float64)
    labels = np.asarray([l for _, l in pairs], dtype=np.intp)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"AUC needs both classes, got {n_pos} positives and {n_neg} negatives"
        )
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    start = 0
    sorted_scores = scores[order]
    while start < len(scores):
        stop = start
        while stop < len(scores) and sorted_scores[stop] == sorted_scores[start]:
            stop += 1
        # average 1-based rank of the tie block; exact (a multiple of 0.5)
        ranks[order[start:stop]] = (start + stop + 1) / 2.0
        start = stop
    hits = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return hits / (n_pos * n_neg)


def ndcg_at_k(scored, k: int):
    """NDCG@k for one user's (score, label, item_index) candidates.

    Binary gains; score ties break toward the lower item index. Returns None
    when the list has no positive (the user is skipped by the aggregate).
    """
    if k < 1:
        raise ConfigError(f"ndcg cutoff must be positive, got {k}")
    rows = list(scored)
    labels = [int(label) for _, label, _ in rows]
    if sum(labels) == 0:
        return None
    ranked = sorted(rows, key=lambda row: (-row[0], row[2]))
    dcg = 0.0
    for rank, (_, label, _) in enumerate(ranked[:k], start=1):
        dcg += float(label) / math.log2(rank + 1)
    ideal = 0.0
    for rank, label in enumerate(sorted(labels, reverse=True)[:k], start=1):
        ideal += float(label) / math.log2(rank + 1)
    return dcg / ideal


def evaluate_model(model, dataset, cfg, split=data_mod.TEST, ks=DEFAULT_NDCG_KS) -> dict:
    """Score every held-out interaction and aggregate pooled AUC and NDCG@k.

    Users without records in the split are ignored; users whose train side
    offers no history at all are counted as skipped. A missing view scores
    through a zero vector, so only the surviving view contributes.
    """
    if dataset.splits is None:
        raise ConfigError("evaluate_model needs a dataset with split tags")
    item_tensor = model.item_matrix()
    item_values = item_tensor.values
    pooled = []
    per_user = {k: [] for k in ks}
    evaluated = 0
    skipped = 0
    for u in range(dataset.n_users):
        held = dataset.split_items(u, split)
        if not held:
            continue
        history = data_mod.partial_history(dataset, u, cfg.history_size, seed=cfg.seed)
        views = model.evaluation_views(dataset.user_ids[u], history.prefer_items,
                                       history.dislike_items, item_matrix=item_tensor)
        if views is None:
            skipped += 1
            continue
        evaluated += 1
        scores = model.score_candidates(views, item_values, held)
        labels = [dataset.labels[(u, i)] for i in held]
        pooled.extend((float(s), int(l)) for s, l in zip(scores, labels))
        user_rows = [(float(s), int(l), i) for s, l, i in zip(scores, labels, held)]
        for k in ks:
            value = ndcg_at_k(user_rows, k)
            if value is not None:
                per_user[k].append(value)
    try:
        pooled_auc = auc(pooled)
    except UndefinedMetricError:
        pooled_auc = None
        log.warning("evaluation pool is single-class; AUC undefined")
    return {
        "auc": pooled_auc,
        "ndcg": {k: (float(np.mean(per_user[k])) if per_user[k] else None) for k in ks},
        "users_evaluated": evaluated,
        "users_skipped": skipped,
        "pairs": len(pooled),
    }


def evaluate_checkpoint(ckpt: Checkpoint, dataset, graph=None, texts=None,
                        embeddings=None, split=data_mod.TEST, ks=DEFAULT_NDCG_KS) -> dict:
    """Rebuild a checkpointed model and evaluate it on a tagged dataset."""
    model, cfg = model_from_checkpoint(ckpt, graph=graph, texts=texts,
                                       embeddings=embeddings)
    return evaluate_model(model, dataset, cfg, split=split, ks=ks)


def checkpoint_view_weights(ckpt: Checkpoint):
    """(w1, w2) from a checkpoint; w2 is None for single-view models."""
    w1 = float(np.asarray(ckpt.tensors["score/w1"]))
    w2 = (float(np.asarray(ckpt.tensors["score/w2"]))
          if "score/w2" in ckpt.tensors else None)
    return w1, w2


def run_experiment(dataset, graph, cfg, texts=None, embeddings=None,
                   seeds=(0,), ks=DEFAULT_NDCG_KS) -> dict:
    """Train and evaluate one configuration over several seeds.

    Every seed re-splits the data, retrains from fresh parameters, and
    evaluates on its own test partition.
    """
    runs = []
    for seed in seeds:
        run_cfg = dataclasses.replace(cfg, seed=int(seed))
        tagged = data_mod.split(dataset, run_cfg.train_fraction,
                                run_cfg.validation_fraction, seed=run_cfg.seed)
        ckpt, stats = train(tagged, graph, run_cfg, texts=texts, embeddings=embeddings)
        report = evaluate_checkpoint(ckpt, tagged, graph=graph, texts=texts,
                                     embeddings=embeddings, ks=ks)
        w1, w2 = checkpoint_view_weights(ckpt)
        runs.append({
            "seed": int(seed),
            "auc": report["auc"],
            "ndcg": report["ndcg"],
            "users_evaluated": report["users_evaluated"],
            "users_skipped": report["users_skipped"],
            "val_auc": ckpt.metrics.get("val_auc"),
            "best_epoch": ckpt.epoch,
            "epochs_run": len(stats),
            "w1": w1,
            "w2": w2,
        })
    aucs = [r["auc"] for r in runs if r["auc"] is not None]
    summary = {
        "mean_auc": float(np.mean(aucs)) if aucs else None,
        "std_auc": float(np.std(aucs)) if aucs else None,
        "ndcg": {},
    }
    for k in ks:
        values = [r["ndcg"][k] for r in runs if r["ndcg"][k] is not None]
        summary["ndcg"][k] = float(np.mean(values)) if values else None
    return {"runs": runs, "summary": summary}
