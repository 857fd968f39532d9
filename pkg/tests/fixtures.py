"""Shared builders for small, fully deterministic model setups."""

import numpy as np

from dualrec import data as data_mod
from dualrec.config import RunConfig
from dualrec.kg import ItemGraph
from dualrec.train import build_model


def toy_config(**overrides):
    """Desk-size configuration: 16-wide fused items, two attention heads."""
    base = dict(
        seed=0, history_size=2, negative_rate=2, batch_size=8,
        semantic_dim=8, hash_buckets=16, projection_dim=8, text_length=4,
        init_method="seeded_random", init_dim=6, gat_heads_1=2, gat_head_dim=4,
        gat_heads_2=1, struct_dim=8, gat_dropout=0.0, attn_heads=2,
        attn_dropout=0.0, learning_rate=0.01, epochs=2, patience=0,
    )
    base.update(overrides)
    return RunConfig(**base)


def toy_dataset(seed=0):
    """Two users rating the same eight items with balanced labels."""
    user_ids = ["uA", "uB"]
    item_ids = [f"i{k}" for k in range(8)]
    patterns = [(1, 0, 1, 0, 1, 0, 1, 0), (0, 1, 0, 1, 0, 1, 1, 0)]
    labels = {(u, i): patterns[u][i] for u in range(2) for i in range(8)}
    dataset = data_mod.InteractionDataset(user_ids, item_ids, labels,
                                          {"uA": 3.0, "uB": 3.0})
    return data_mod.split(dataset, seed=seed)


def toy_graph():
    item_ids = [f"i{k}" for k in range(8)]
    edges = [(k, (k + 1) % 8) for k in range(8)] + [(0, 4), (2, 6)]
    return ItemGraph(item_ids, edges, threshold=0)


def toy_texts():
    return {f"i{k}": f"tok{k} shared{k % 3}" for k in range(8)}


def toy_setup(**overrides):
    """(cfg, tagged dataset, graph, texts, histories, model) ready to train."""
    cfg = toy_config(**overrides)
    dataset = toy_dataset(seed=cfg.seed)
    graph = toy_graph()
    texts = toy_texts()
    if cfg.views == "multi":
        histories = data_mod.build_histories(dataset, cfg.history_size, seed=cfg.seed)
    else:
        histories = {u: data_mod.build_combined_history(dataset, u, cfg.history_size,
                                                        seed=cfg.seed)
                     for u in range(dataset.n_users)}
    model = build_model(dataset, graph, cfg, texts=texts)
    return cfg, dataset, graph, texts, histories, model


def toy_batch(dataset, histories, cfg):
    batches = data_mod.sample_training_batches(dataset, histories,
                                               cfg.negative_rate, cfg.batch_size,
                                               seed=cfg.seed)
    return batches[0]
