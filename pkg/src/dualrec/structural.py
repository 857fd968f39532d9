"""Graph side of item encoding: node initialization plus attention layers.

Items start from initialization vectors (a small adjacency autoencoder by
default), then pass through two graph-attention layers over the co-item
graph: a concatenating multi-head layer followed by an averaging one.
Attention for a node is normalized over its graph neighbors only; isolated
nodes attend to themselves so every row stays a distribution.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .optim import Adam

CONCAT, AVERAGE = "concat", "average"


def attention_mask(graph) -> np.ndarray:
    """Boolean (M, M) neighbor mask; only isolated nodes get a self loop."""
    n = graph.n_nodes
    mask = np.zeros((n, n), dtype=bool)
    for i in range(n):
        row = graph.neighbors[i]
        if row:
            mask[i, row] = True
        else:
            mask[i, i] = True
    return mask


def init_nodes(graph, dim: int, method: str = "sdne_lite", seed: int = 0, **kwargs) -> np.ndarray:
    """Initialization vectors for every graph node, deterministic in `seed`."""
    if dim < 1:
        raise ConfigError(f"init dimension must be positive, got {dim}")
    if method == "seeded_random":
        rng = np.random.default_rng([seed, 503])
        return rng.normal(0.0, 1.0 / np.sqrt(dim), size=(graph.n_nodes, dim))
    if method == "spectral":
        return _spectral_init(graph, dim)
    if method == "sdne_lite":
        return _sdne_lite_init(graph, dim, seed, **kwargs)
    raise ConfigError(f"unknown init method {method!r}; use sdne_lite, spectral or seeded_random")


def _spectral_init(graph, dim: int) -> np.ndarray:
    """Coordinates from the lowest Laplacian eigenvectors, sign-normalized."""
    n = graph.n_nodes
    if dim > n:
        raise ConfigError(f"spectral init needs dim <= node count, got {dim} > {n}")
    a = graph.adjacency_matrix()
    laplacian = np.diag(a.sum(axis=1)) - a
    _, vectors = np.linalg.eigh(laplacian)
    start = 1 if dim < n else 0  # skip the constant eigenvector when possible
    chosen = vectors[:, start:start + dim].copy()
    for col in range(chosen.shape[1]):
        pivot = np.argmax(np.abs(chosen[:, col]))
        if chosen[pivot, col] < 0:
            chosen[:, col] = -chosen[:, col]
    return chosen


def _sdne_lite_init(graph, dim, seed, epochs=80, lr=0.01, edge_weight=5.0, proximity_weight=1.0):
    """Single-hidden-layer autoencoder over adjacency rows.

    Reconstruction re-weights one-entries by `edge_weight` so edges matter
    more than the zero sea, and a first-order proximity penalty pulls the
    hidden codes of adjacent nodes together. Returns the hidden activations.
    """
    n = graph.n_nodes
    a = graph.adjacency_matrix()
    adjacency = ad.tensor(a)
    emphasis = ad.tensor(1.0 + (edge_weight - 1.0) * a)
    laplacian = ad.tensor(np.diag(a.sum(axis=1)) - a)
    n_edges = max(1, graph.n_edges)

    rng = np.random.default_rng([seed, 509])
    params = {
        "enc_w": ad.tensor(rng.normal(0.0, 1.0 / np.sqrt(n), size=(dim, n)), requires_grad=True),
        "enc_b": ad.tensor(np.zeros(dim), requires_grad=True),
        "dec_w": ad.tensor(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(n, dim)), requires_grad=True),
        "dec_b": ad.tensor(np.zeros(n), requires_grad=True),
    }

    def hidden():
        return (ad.matmul(adjacency, params["enc_w"].T) + params["enc_b"]).tanh()

    optimizer = Adam(params, lr=lr)
    for _ in range(epochs):
        h = hidden()
        recon = ad.matmul(h, params["dec_w"].T) + params["dec_b"]
        diff = recon - adjacency
        loss = (diff * diff * emphasis).sum() / (n * n)
        proximity = (h * ad.matmul(laplacian, h)).sum() / (n_edges * dim)
        loss = loss + proximity * proximity_weight
        optimizer.step(ad.gradients(loss, params))
    return hidden().values


class GatLayer:
    """One multi-head graph-attention layer.

    Per head: transform nodes, score neighbor pairs with a shared attention
    vector through a leaky ReLU, normalize over the neighborhood, and
    aggregate. Head outputs are either ELU-then-concatenated or averaged
    before a single ELU. Dropout (training only) hits the attention weights.
    """

    def __init__(self, d_in, d_out, heads, mode, *, slope=0.2, dropout=0.0, seed=0, prefix="gat"):
        if mode not in (CONCAT, AVERAGE):
            raise ConfigError(f"gat layer mode must be concat or average, got {mode!r}")
        if heads < 1:
            raise ConfigError(f"gat layer needs at least one head, got {heads}")
        if d_in < 1 or d_out < 1:
            raise ConfigError(f"gat layer dims must be positive, got {d_in}, {d_out}")
        self.d_in, self.d_out, self.n_heads, self.mode = d_in, d_out, heads, mode
        self.slope = slope
        self.dropout = dropout
        rng = np.random.default_rng([seed, 521])
        self.heads = []
        for k in range(heads):
            weight = ad.tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in)),
                               requires_grad=True, name=f"{prefix}/h{k}/weight")
            attn = ad.tensor(rng.normal(0.0, 1.0 / np.sqrt(2 * d_out), size=2 * d_out),
                             requires_grad=True, name=f"{prefix}/h{k}/attn")
            self.heads.append((weight, attn))

    def parameters(self) -> dict:
        out = {}
        for weight, attn in self.heads:
            out[weight.name] = weight
            out[attn.name] = attn
        return out

    def _head_attention(self, vectors: ad.Tensor, mask: np.ndarray, k: int):
        """Returns (alpha, transformed) for head k; alpha rows are distributions."""
        weight, attn = self.heads[k]
        h = ad.matmul(vectors, weight.T)
        src = ad.matmul(h, attn[: self.d_out].reshape(-1, 1))
        dst = ad.matmul(h, attn[self.d_out:].reshape(-1, 1))
        logits = ad.leaky_relu(src + dst.T, self.slope)
        return ad.masked_softmax_rows(logits, mask), h

    def attention(self, vectors, mask: np.ndarray) -> list:
        """Per-head attention matrices (numpy, no dropout) for inspection."""
        t = vectors if isinstance(vectors, ad.Tensor) else ad.tensor(vectors)
        return [self._head_attention(t, mask, k)[0].values for k in range(self.n_heads)]

    def forward(self, vectors: ad.Tensor, mask: np.ndarray, training=False, seeds=None) -> ad.Tensor:
        if vectors.ndim != 2 or vectors.shape[1] != self.d_in:
            raise ConfigError(f"gat layer expects (*, {self.d_in}) input, got {vectors.shape}")
        messages = []
        for k in range(self.n_heads):
            alpha, h = self._head_attention(vectors, mask, k)
            if training and self.dropout > 0.0:
                alpha = ad.dropout(alpha, self.dropout, True, seeds.next())
            messages.append(ad.matmul(alpha, h))
        if self.mode == CONCAT:
            return ad.concat([ad.elu(m) for m in messages], axis=1)
        total = messages[0]
        for m in messages[1:]:
            total = total + m
        return ad.elu(total / self.n_heads)


def gat_attention(vectors, node: int, neighbors, layer: GatLayer, head: int = 0) -> np.ndarray:
    """Attention weights of `node` over `neighbors` for one head (no dropout)."""
    if not neighbors:
        raise ConfigError(f"node {node} needs at least one neighbor (itself when isolated)")
    t = vectors if isinstance(vectors, ad.Tensor) else ad.tensor(vectors)
    mask = np.zeros((t.shape[0], t.shape[0]), dtype=bool)
    mask[:, 0] = True  # keep other rows well-formed; only `node`'s row is read
    mask[node, :] = False
    mask[node, neighbors] = True
    alpha, _ = layer._head_attention(t, mask, head)
    return alpha.values[node, neighbors]


class StructuralEncoder:
    """Initialization vectors plus the two-layer attention stack."""

    def __init__(self, graph, cfg, seed: int = 0, prefix: str = "structural"):
        """cfg needs: init_method, init_dim, freeze_init, gat_heads_1,
        gat_head_dim, gat_heads_2, struct_dim, gat_dropout, leaky_slope, and
        the sdne_* knobs."""
        self.mask = attention_mask(graph)
        init = init_nodes(
            graph, cfg.init_dim, method=cfg.init_method, seed=seed,
            **({"epochs": cfg.sdne_epochs, "lr": cfg.sdne_lr,
                "edge_weight": cfg.sdne_edge_weight,
                "proximity_weight": cfg.sdne_proximity_weight}
               if cfg.init_method == "sdne_lite" else {}),
        )
        self.init_vectors = ad.tensor(init, requires_grad=not cfg.freeze_init,
                                      name=f"{prefix}/init")
        self.layer1 = GatLayer(cfg.init_dim, cfg.gat_head_dim, cfg.gat_heads_1, CONCAT,
                               slope=cfg.leaky_slope, dropout=cfg.gat_dropout,
                               seed=seed, prefix=f"{prefix}/gat1")
        self.layer2 = GatLayer(cfg.gat_head_dim * cfg.gat_heads_1, cfg.struct_dim,
                               cfg.gat_heads_2, AVERAGE,
                               slope=cfg.leaky_slope, dropout=cfg.gat_dropout,
                               seed=seed + 1, prefix=f"{prefix}/gat2")
        self.output_dim = cfg.struct_dim

    def parameters(self) -> dict:
        out = {}
        if self.init_vectors.requires_grad:
            out[self.init_vectors.name] = self.init_vectors
        out.update(self.layer1.parameters())
        out.update(self.layer2.parameters())
        return out

    def forward(self, training=False, seeds=None) -> ad.Tensor:
        hidden = self.layer1.forward(self.init_vectors, self.mask, training, seeds)
        return self.layer2.forward(hidden, self.mask, training, seeds)


def encode_structural(graph, cfg, seed: int = 0) -> np.ndarray:
    """Convenience: fresh encoder, evaluation-mode forward, numpy out."""
    return StructuralEncoder(graph, cfg, seed=seed).forward().values
