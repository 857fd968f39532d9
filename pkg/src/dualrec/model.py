"""Click model: item encodings, user views, and the ranking loss.

The score for a candidate item c is w1 * <c, u_prefer> + w2 * <c, u_dislike>
with trainable scalar view weights (started at +1 and -1). Training minimizes
the negative log of a softmax over each positive against its sampled
negatives, computed with log-sum-exp stabilization and summed over positives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .aggregate import aggregate_average, aggregate_concat
from .errors import ConfigError, ShapeError
from .semantic import HashedBowEncoder, SemanticProjection
from .structural import StructuralEncoder
from .user import SelfAttention, UserViews, build_user_views, split_views, user_view_vector

log = logging.getLogger(__name__)

BOTH, SEMANTIC, STRUCTURAL = "both", "semantic", "structural"
MULTI, SINGLE = "multi", "single"


@dataclass
class ScoreWeights:
    w1: float
    w2: float


def predict_click(views: UserViews, candidate: np.ndarray, weights: ScoreWeights) -> float:
    """Dual-view click score for one candidate embedding."""
    candidate = np.asarray(candidate, dtype=np.float64)
    if candidate.shape != views.u_prefer.shape:
        raise ShapeError(
            f"candidate shape {candidate.shape} does not match view shape {views.u_prefer.shape}"
        )
    return float(weights.w1 * (candidate @ views.u_prefer)
                 + weights.w2 * (candidate @ views.u_dislike))


def ranking_loss_rows(scores: ad.Tensor) -> ad.Tensor:
    """Per-positive loss from a (k, 1 + R) score matrix, positives in column 0.

    Each row contributes -log(exp(s+) / (exp(s+) + sum exp(s-))), evaluated
    as logsumexp(row) - s+ for stability. Returns a (k, 1) column.
    """
    if scores.ndim != 2 or scores.shape[1] < 2:
        raise ShapeError(f"ranking loss needs (k, 1 + R) scores, got {scores.shape}")
    return ad.logsumexp_rows(scores) - scores[:, 0:1]


class ClickModel:
    """End-to-end differentiable scorer over a fixed item vocabulary.

    `semantic_source` is ("bow", token-weight matrix), ("precomputed",
    vectors) or None when the semantic modality is off; `graph` may be None
    when the structural modality is off. Item embeddings are recomputed from
    current parameters on every call, so training stays end-to-end.
    """

    def __init__(self, cfg, item_ids, graph=None, semantic_source=None, seed=0):
        self.cfg = cfg
        self.item_ids = list(item_ids)
        self.modality = cfg.modality
        self.views_mode = cfg.views
        if self.modality not in (BOTH, SEMANTIC, STRUCTURAL):
            raise ConfigError(f"unknown modality {cfg.modality!r}")
        if self.views_mode not in (MULTI, SINGLE):
            raise ConfigError(f"unknown views mode {cfg.views!r}")
        if cfg.aggregation not in ("concat", "average"):
            raise ConfigError(f"unknown aggregation {cfg.aggregation!r}")

        self.bow = None
        self.bow_weights = None
        self.precomputed = None
        self.projection = None
        if self.modality in (BOTH, SEMANTIC):
            if semantic_source is None:
                raise ConfigError(f"{self.modality} modality needs a semantic source")
            kind, payload = semantic_source
            if kind == "bow":
                if payload.shape[0] != len(self.item_ids):
                    raise ConfigError(
                        f"token matrix covers {payload.shape[0]} items, expected {len(self.item_ids)}"
                    )
                self.bow = HashedBowEncoder(cfg.semantic_dim, cfg.hash_buckets, seed=seed)
                self.bow_weights = np.asarray(payload, dtype=np.float64)
            elif kind == "precomputed":
                if payload.shape != (len(self.item_ids), cfg.semantic_dim):
                    raise ConfigError(
                        f"precomputed vectors have shape {payload.shape}, expected "
                        f"({len(self.item_ids)}, {cfg.semantic_dim})"
                    )
                self.precomputed = ad.tensor(payload)
            else:
                raise ConfigError(f"unknown semantic source kind {kind!r}")
            self.projection = SemanticProjection(cfg.semantic_dim, cfg.projection_dim, seed=seed)

        self.structural = None
        if self.modality in (BOTH, STRUCTURAL):
            if graph is None:
                raise ConfigError(f"{self.modality} modality needs an item graph")
            if graph.n_nodes != len(self.item_ids):
                raise ConfigError(
                    f"graph has {graph.n_nodes} nodes, expected {len(self.item_ids)}"
                )
            self.structural = StructuralEncoder(graph, cfg, seed=seed)

        if self.modality == BOTH and cfg.aggregation == "average":
            if cfg.projection_dim != cfg.struct_dim:
                raise ConfigError(
                    f"average aggregation needs equal widths, got semantic "
                    f"{cfg.projection_dim} and structural {cfg.struct_dim}"
                )
            self.d_item = cfg.projection_dim
        elif self.modality == BOTH:
            self.d_item = cfg.projection_dim + cfg.struct_dim
        elif self.modality == SEMANTIC:
            self.d_item = cfg.projection_dim
        else:
            self.d_item = cfg.struct_dim

        if self.views_mode == MULTI:
            self.attn_prefer = SelfAttention(self.d_item, cfg.attn_heads,
                                             dropout=cfg.attn_dropout, seed=seed,
                                             prefix="views/prefer")
            if cfg.tie_views:
                self.attn_dislike = self.attn_prefer
            else:
                self.attn_dislike = SelfAttention(self.d_item, cfg.attn_heads,
                                                  dropout=cfg.attn_dropout, seed=seed + 1,
                                                  prefix="views/dislike")
        else:
            self.attn_single = SelfAttention(self.d_item, cfg.attn_heads,
                                             dropout=cfg.attn_dropout, seed=seed,
                                             prefix="views/single")

        self.w1 = ad.tensor(float(cfg.w1_init), requires_grad=True, name="score/w1")
        self.w2 = ad.tensor(float(cfg.w2_init), requires_grad=True, name="score/w2")

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> dict:
        out = {}
        if self.bow is not None:
            out.update(self.bow.parameters())
        if self.projection is not None:
            out.update(self.projection.parameters())
        if self.structural is not None:
            out.update(self.structural.parameters())
        if self.views_mode == MULTI:
            out.update(self.attn_prefer.parameters())
            out.update(self.attn_dislike.parameters())  # no-op when tied
            out[self.w1.name] = self.w1
            out[self.w2.name] = self.w2
        else:
            out.update(self.attn_single.parameters())
            out[self.w1.name] = self.w1
        return out

    def score_weights(self) -> ScoreWeights:
        return ScoreWeights(self.w1.item(), self.w2.item())

    def load_tensors(self, tensors: dict) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(tensors))
        extra = sorted(set(tensors) - set(params))
        if missing or extra:
            raise ConfigError(
                f"checkpoint tensors do not match the model: missing {missing[:5]}, extra {extra[:5]}"
            )
        for name, p in params.items():
            stored = np.asarray(tensors[name], dtype=np.float64)
            if stored.shape != p.values.shape:
                raise ConfigError(
                    f"tensor {name} has shape {stored.shape}, expected {p.values.shape}"
                )
            p.values = stored.copy()

    # -- forward ------------------------------------------------------------

    def item_matrix(self, training=False, seeds=None) -> ad.Tensor:
        """(M, d_item) embeddings for the whole vocabulary, from live parameters."""
        semantic = None
        if self.projection is not None:
            base = (self.bow.encode_matrix(self.bow_weights) if self.bow is not None
                    else self.precomputed)
            semantic = self.projection.forward(base)
        structural = None
        if self.structural is not None:
            structural = self.structural.forward(training=training, seeds=seeds)
        if semantic is not None and structural is not None:
            if self.cfg.aggregation == "concat":
                return aggregate_concat(semantic, structural)
            return aggregate_average(semantic, structural)
        return semantic if semantic is not None else structural

    def _view_vectors(self, history, item_matrix, training, seeds):
        """Tensor user vectors for one user under the current views mode."""
        if self.views_mode == MULTI:
            prefer_rows, dislike_rows = split_views(history, item_matrix)
            u_p = user_view_vector(prefer_rows, self.attn_prefer, training, seeds)
            u_d = user_view_vector(dislike_rows, self.attn_dislike, training, seeds)
            return u_p, u_d
        rows = ad.take_rows(item_matrix, history)
        return user_view_vector(rows, self.attn_single, training, seeds), None

    def _click_column(self, candidates: ad.Tensor, u_p: ad.Tensor, u_d) -> ad.Tensor:
        """(n, d) candidate rows -> (n, 1) click scores."""
        prefer = ad.matmul(candidates, u_p.reshape(-1, 1))
        if u_d is None:
            return self.w1 * prefer
        dislike = ad.matmul(candidates, u_d.reshape(-1, 1))
        return self.w1 * prefer + self.w2 * dislike

    def batch_loss(self, batch, histories, user_index, training=True, seeds=None) -> ad.Tensor:
        """Summed ranking loss of one batch of training examples.

        Examples are grouped per user so each user's views are built once.
        `histories` maps user index -> UserHistory (multi mode) or item list
        (single mode); `user_index` maps user id -> user index.
        """
        if not batch:
            raise ConfigError("batch_loss needs a non-empty batch")
        item_matrix = self.item_matrix(training=training, seeds=seeds)
        by_user = {}
        for ex in batch:
            by_user.setdefault(ex.user_id, []).append(ex)
        total = None
        for user_id in sorted(by_user):
            examples = by_user[user_id]
            u_p, u_d = self._view_vectors(histories[user_index[user_id]],
                                          item_matrix, training, seeds)
            flat = []
            width = len(examples[0].negative_items) + 1
            for ex in examples:
                if len(ex.negative_items) + 1 != width:
                    raise ShapeError("examples in one batch must share the negative count")
                flat.append(ex.positive_item)
                flat.extend(ex.negative_items)
            candidates = ad.take_rows(item_matrix, flat)
            scores = self._click_column(candidates, u_p, u_d).reshape(len(examples), width)
            user_loss = ranking_loss_rows(scores).sum()
            total = user_loss if total is None else total + user_loss
        return total

    def example_loss(self, example, histories, user_index, training=False, seeds=None) -> float:
        """Convenience scalar loss of a single example."""
        return self.batch_loss([example], histories, user_index,
                               training=training, seeds=seeds).item()

    def user_views(self, history, item_matrix=None, export_attention=False) -> UserViews:
        """Evaluation-mode views (no dropout) for one user.

        `history` is a UserHistory in multi mode or a (user_id, item list)
        pair in single mode, where the dislike view comes back as zeros.
        """
        if item_matrix is None:
            item_matrix = self.item_matrix()
        if self.views_mode == MULTI:
            return build_user_views(history, item_matrix, self.attn_prefer,
                                    self.attn_dislike, export_attention=export_attention)
        user_id, items = history
        rows = ad.take_rows(item_matrix, items)
        if export_attention:
            u, weights = user_view_vector(rows, self.attn_single, return_weights=True)
            return UserViews(user_id, u.values, np.zeros_like(u.values), {"single": weights})
        u = user_view_vector(rows, self.attn_single)
        return UserViews(user_id, u.values, np.zeros_like(u.values))

    def evaluation_views(self, user_id, prefer_items, dislike_items,
                         item_matrix=None):
        """Views from possibly-partial histories; an empty list yields zeros.

        Returns None when both lists are empty (the user cannot be scored).
        Single mode folds everything into one combined list.
        """
        if item_matrix is None:
            item_matrix = self.item_matrix()
        if self.views_mode == SINGLE:
            items = list(prefer_items) + list(dislike_items)
            if not items:
                return None
            return self.user_views((user_id, items), item_matrix=item_matrix)
        if not prefer_items and not dislike_items:
            return None
        width = item_matrix.values.shape[1]

        def view_vector(items, attention):
            if not items:
                return np.zeros(width)
            rows = ad.take_rows(item_matrix, items)
            return user_view_vector(rows, attention).values

        return UserViews(user_id, view_vector(prefer_items, self.attn_prefer),
                         view_vector(dislike_items, self.attn_dislike))

    def score_candidates(self, views: UserViews, item_matrix_values: np.ndarray,
                         candidates) -> np.ndarray:
        """Vector of click scores for candidate item indices (evaluation path)."""
        rows = item_matrix_values[np.asarray(candidates, dtype=np.intp)]
        w = self.score_weights()
        scores = w.w1 * (rows @ views.u_prefer)
        if self.views_mode == MULTI:
            scores = scores + w.w2 * (rows @ views.u_dislike)
        return scores
