"""Training loop, early stopping, and the checkpoint container.

Checkpoints are a custom byte-exact format (an ASCII magic line, one compact
JSON header with sorted keys, then raw little-endian float64 tensor data in
header order), so identical runs produce identical files.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from . import data as data_mod
from . import autodiff as ad
from .config import RunConfig
from .errors import ConfigError, IngestionError, TrainingDivergedError, UndefinedMetricError
from .model import MULTI, ClickModel
from .optim import Adam
from .semantic import tokenize_pad

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"DUALREC-CKPT v1\n"

# per-example log loss far beyond anything a sane configuration produces
DIVERGENCE_LIMIT = 1e8


@dataclass
class Checkpoint:
    """Named tensors plus everything needed to rebuild and reuse the model."""

    config: dict
    epoch: int
    metrics: dict
    tensors: dict
    user_ids: list
    item_ids: list


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    val_auc: float | None
    seconds: float


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    names = sorted(ckpt.tensors)
    header = {
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "metrics": ckpt.metrics,
        "tensors": [{"name": n, "shape": list(ckpt.tensors[n].shape)} for n in names],
        "user_ids": ckpt.user_ids,
        "item_ids": ckpt.item_ids,
    }
    with open(path, "wb") as handle:
        handle.write(CHECKPOINT_MAGIC)
        handle.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        handle.write(b"\n")
        for name in names:
            handle.write(np.ascontiguousarray(ckpt.tensors[name], dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        handle = open(path, "rb")
    except OSError as exc:
        raise IngestionError(f"cannot read checkpoint {path}: {exc}") from exc
    with handle:
        magic = handle.readline()
        if magic != CHECKPOINT_MAGIC:
            raise IngestionError(f"{path} is not a checkpoint (bad magic line)")
        header = json.loads(handle.readline().decode("utf-8"))
        tensors = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = handle.read(count * 8)
            if len(raw) != count * 8:
                raise IngestionError(f"checkpoint {path} is truncated at tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
        if handle.read(1):
            raise IngestionError(f"checkpoint {path} has trailing bytes")
    return Checkpoint(
        config=header["config"],
        epoch=header["epoch"],
        metrics=header["metrics"],
        tensors=tensors,
        user_ids=header["user_ids"],
        item_ids=header["item_ids"],
    )


def bow_token_matrix(item_ids, texts: dict, cfg) -> np.ndarray:
    """Token-bucket weight rows for every item, in vocabulary order."""
    from .semantic import HashedBowEncoder

    sequences = []
    missing = 0
    for item_id in item_ids:
        text = texts.get(item_id, "")
        if not text:
            missing += 1
        sequences.append(tokenize_pad(text, cfg.text_length))
    if missing:
        log.warning("bow_token_matrix: %d of %d items have no text", missing, len(item_ids))
    probe = HashedBowEncoder(cfg.semantic_dim, cfg.hash_buckets, seed=cfg.seed)
    return probe.weight_matrix(sequences)


def build_semantic_source(item_ids, cfg, texts=None, embeddings=None):
    """Resolve the configured semantic encoder into a model input."""
    if cfg.modality == "structural":
        return None
    if cfg.semantic_encoder == "hashed_bow":
        if texts is None:
            raise ConfigError("hashed_bow encoder needs item texts")
        return ("bow", bow_token_matrix(item_ids, texts, cfg))
    if cfg.semantic_encoder == "precomputed":
        if embeddings is None:
            raise ConfigError("precomputed encoder needs an embedding table")
        from .semantic import PrecomputedEncoder

        ids, vectors = embeddings
        return ("precomputed", PrecomputedEncoder(ids, vectors).matrix(item_ids))
    raise ConfigError(f"unknown semantic encoder {cfg.semantic_encoder!r}")


def build_model(dataset, graph, cfg, texts=None, embeddings=None) -> ClickModel:
    source = build_semantic_source(dataset.item_ids, cfg, texts=texts, embeddings=embeddings)
    use_graph = graph if cfg.modality in ("both", "structural") else None
    return ClickModel(cfg, dataset.item_ids, graph=use_graph,
                      semantic_source=source, seed=cfg.seed)


def training_histories(dataset, cfg) -> dict:
    """Histories for the training cohort (users holding both train-side views).

    Single-view runs keep the same cohort for a like-for-like comparison but
    sample one combined list per user from all of their train items.
    """
    dual = data_mod.build_histories(dataset, cfg.history_size, seed=cfg.seed)
    if cfg.views == MULTI:
        return dual
    return {u: data_mod.build_combined_history(dataset, u, cfg.history_size, seed=cfg.seed)
            for u in dual}


def _parameter_norms(params: dict) -> str:
    worst = sorted(params, key=lambda n: -float(np.abs(params[n].values).max()))[:5]
    return ", ".join(
        f"{n}: |max|={float(np.abs(params[n].values).max()):.3e}" for n in worst
    )


def _validation_auc(model, dataset, histories) -> float | None:
    """Pooled AUC over validation interactions of users with histories."""
    from .metrics import auc

    item_values = model.item_matrix().values
    scored = []
    for u, history in sorted(histories.items()):
        pairs = [(i, dataset.labels[(u, i)]) for i in dataset.split_items(u, data_mod.VALIDATION)]
        if not pairs:
            continue
        views = model.user_views(history if model.views_mode == MULTI
                                 else (dataset.user_ids[u], history))
        scores = model.score_candidates(views, item_values, [i for i, _ in pairs])
        scored.extend((float(s), label) for s, (_, label) in zip(scores, pairs))
    try:
        return auc(scored)
    except UndefinedMetricError:
        return None


def train(dataset, graph, cfg: RunConfig, texts=None, embeddings=None):
    """Train a model and return (best checkpoint, per-epoch stats).

    The dataset is split here (deterministically from cfg.seed) when it has
    no split tags yet. Early stopping keeps the best-validation parameters;
    a non-finite loss aborts with the offending batch and parameter norms.
    """
    if dataset.splits is None:
        dataset = data_mod.split(dataset, cfg.train_fraction, cfg.validation_fraction,
                                 seed=cfg.seed)
    histories = training_histories(dataset, cfg)
    if not histories:
        raise ConfigError("no user has both history views in the train split")
    model = build_model(dataset, graph, cfg, texts=texts, embeddings=embeddings)
    params = model.parameters()
    optimizer = Adam(params, lr=cfg.learning_rate)

    def snapshot():
        return {name: p.values.copy() for name, p in params.items()}

    best = snapshot()
    best_auc = None
    best_epoch = 0
    stale = 0
    stats = []
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        batches = data_mod.sample_training_batches(
            dataset, histories, cfg.negative_rate, cfg.batch_size,
            seed=[cfg.seed, 907, epoch],
        )
        total_loss = 0.0
        total_examples = 0
        for b_idx, batch in enumerate(batches):
            seeds = ad.SeedStream(cfg.seed, 911, epoch, b_idx)
            loss = model.batch_loss(batch, histories, dataset.user_index,
                                    training=True, seeds=seeds)
            loss_value = loss.item()
            if not np.isfinite(loss_value) or abs(loss_value) > DIVERGENCE_LIMIT * len(batch):
                raise TrainingDivergedError(
                    f"loss {loss_value:.3e} at epoch {epoch}, batch {b_idx}; "
                    f"parameter norms: {_parameter_norms(params)}"
                )
            total_loss += loss_value
            total_examples += len(batch)
            optimizer.step(ad.gradients(loss, params))
        mean_loss = total_loss / max(1, total_examples)
        val_auc = _validation_auc(model, dataset, histories)
        seconds = time.perf_counter() - start
        stats.append(EpochStats(epoch, mean_loss, val_auc, seconds))
        log.info("epoch=%d mean_loss=%.6f val_auc=%s wall=%.2fs",
                 epoch, mean_loss, "n/a" if val_auc is None else f"{val_auc:.4f}", seconds)
        if val_auc is not None:
            if best_auc is None or val_auc > best_auc:
                best = snapshot()
                best_auc = val_auc
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
                if cfg.patience > 0 and stale >= cfg.patience:
                    log.info("early stop after epoch %d (best epoch %d)",
                             epoch, best_epoch)
                    break
    if best_auc is None and stats:
        # no usable validation signal; keep the last parameters
        best = snapshot()
        best_epoch = stats[-1].epoch
    metrics = {"val_auc": best_auc, "best_epoch": best_epoch}
    ckpt = Checkpoint(config=cfg.to_dict(), epoch=best_epoch, metrics=metrics,
                      tensors=best, user_ids=dataset.user_ids, item_ids=dataset.item_ids)
    return ckpt, stats


def model_from_checkpoint(ckpt: Checkpoint, graph=None, texts=None, embeddings=None):
    """Rebuild the model a checkpoint was trained with and load its tensors."""
    cfg = RunConfig.from_dict(ckpt.config)
    source = build_semantic_source(ckpt.item_ids, cfg, texts=texts, embeddings=embeddings)
    use_graph = graph if cfg.modality in ("both", "structural") else None
    model = ClickModel(cfg, ckpt.item_ids, graph=use_graph,
                       semantic_source=source, seed=cfg.seed)
    model.load_tensors(ckpt.tensors)
    return model, cfg


def render_training_log(stats) -> str:
    lines = []
    for s in stats:
        val = "n/a" if s.val_auc is None else f"{s.val_auc:.6f}"
        lines.append(f"epoch={s.epoch} mean_loss={s.mean_loss:.6f} "
                     f"val_auc={val} wall_seconds={s.seconds:.3f}")
    return "\n".join(lines) + ("\n" if lines else "")
