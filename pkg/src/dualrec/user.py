"""User representation: one self-attention block per history view.

A view is a fixed-size stack of item embeddings (preferred or disliked
history items). Multi-head self-attention lets each history item weigh the
others, and mean pooling collapses the refined stack into one user vector
per view.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, ShapeError

PREFER, DISLIKE = "prefer", "dislike"


@dataclass
class UserViews:
    """Evaluation-ready user vectors, one per view, plus exported attention.

    `attention` maps view name -> list of per-head (z, z) row-stochastic
    matrices from the last forward pass.
    """

    user_id: str
    u_prefer: np.ndarray
    u_dislike: np.ndarray
    attention: dict = field(default_factory=dict)


class SelfAttention:
    """Multi-head scaled dot-product self-attention with an output map."""

    def __init__(self, d_model: int, heads: int, *, dropout=0.0, seed=0, prefix="views"):
        if heads < 1:
            raise ConfigError(f"self-attention needs at least one head, got {heads}")
        if d_model % heads != 0:
            raise ConfigError(
                f"head count {heads} must divide the item dimension {d_model}"
            )
        self.d_model = d_model
        self.n_heads = heads
        self.d_hide = d_model // heads
        self.dropout = dropout
        rng = np.random.default_rng([seed, 601])
        scale = 1.0 / np.sqrt(d_model)
        self.heads = []
        for k in range(heads):
            self.heads.append({
                name: ad.tensor(rng.normal(0.0, scale, size=(d_model, self.d_hide)),
                                requires_grad=True, name=f"{prefix}/h{k}/{name}")
                for name in ("wq", "wk", "wv")
            })
        self.out_map = ad.tensor(rng.normal(0.0, scale, size=(d_model, d_model)),
                                 requires_grad=True, name=f"{prefix}/wo")

    def parameters(self) -> dict:
        out = {}
        for head in self.heads:
            for t in head.values():
                out[t.name] = t
        out[self.out_map.name] = self.out_map
        return out

    def forward(self, rows: ad.Tensor, training=False, seeds=None, return_weights=False):
        """(z, d_model) -> (z, d_model); optionally also per-head attention."""
        if rows.ndim != 2 or rows.shape[1] != self.d_model:
            raise ShapeError(f"self-attention expects (*, {self.d_model}) rows, got {rows.shape}")
        outputs = []
        weights = []
        inv_sqrt = 1.0 / np.sqrt(self.d_hide)
        for head in self.heads:
            q = ad.matmul(rows, head["wq"])
            k = ad.matmul(rows, head["wk"])
            v = ad.matmul(rows, head["wv"])
            alpha = ad.softmax_rows(ad.matmul(q, k.T) * inv_sqrt)
            if return_weights:
                weights.append(alpha.values.copy())
            if training and self.dropout > 0.0:
                alpha = ad.dropout(alpha, self.dropout, True, seeds.next())
            outputs.append(ad.matmul(alpha, v))
        refined = ad.matmul(ad.concat(outputs, axis=1), self.out_map)
        return (refined, weights) if return_weights else refined


def mean_pool(rows: ad.Tensor) -> ad.Tensor:
    """Average the refined history rows into one user vector."""
    if rows.ndim != 2:
        raise ShapeError(f"mean_pool expects a matrix, got shape {rows.shape}")
    return rows.mean(axis=0)


def split_views(history, item_matrix: ad.Tensor):
    """Gather the two (B, d) view stacks for one user's history."""
    n = item_matrix.shape[0]
    for idx in history.prefer_items + history.dislike_items:
        if not 0 <= idx < n:
            raise ShapeError(f"history item index {idx} outside the {n}-item embedding table")
    return (ad.take_rows(item_matrix, history.prefer_items),
            ad.take_rows(item_matrix, history.dislike_items))


def user_view_vector(rows: ad.Tensor, attention: SelfAttention,
                     training=False, seeds=None, return_weights=False):
    """One view: self-attention then mean pooling."""
    if return_weights:
        refined, weights = attention.forward(rows, training, seeds, return_weights=True)
        return mean_pool(refined), weights
    return mean_pool(attention.forward(rows, training, seeds))


def build_user_views(history, item_matrix, attn_prefer: SelfAttention,
                     attn_dislike: SelfAttention, export_attention=False) -> UserViews:
    """Evaluation-mode user views (no dropout), numpy vectors out."""
    prefer_rows, dislike_rows = split_views(history, item_matrix)
    attention = {}
    if export_attention:
        u_p, w_p = user_view_vector(prefer_rows, attn_prefer, return_weights=True)
        u_d, w_d = user_view_vector(dislike_rows, attn_dislike, return_weights=True)
        attention[PREFER] = w_p
        attention[DISLIKE] = w_d
    else:
        u_p = user_view_vector(prefer_rows, attn_prefer)
        u_d = user_view_vector(dislike_rows, attn_dislike)
    return UserViews(history.user_id, u_p.values, u_d.values, attention)
