"""Planted synthetic corpus: label construction, determinism, file output."""

import numpy as np
import pytest

from dualrec import data as data_mod
from dualrec import kg as kg_mod
from dualrec.config import RunConfig
from dualrec.errors import ConfigError
from dualrec.semantic import read_item_texts
from dualrec.synth import generate_synthetic, write_synthetic


def small_cfg(**overrides):
    base = dict(synth_users=25, synth_items=40, synth_interactions=12)
    base.update(overrides)
    return RunConfig(**base)


class TestGeneration:
    def test_labels_split_each_user_at_the_median(self):
        data = generate_synthetic(small_cfg(), seed=3)
        by_user = {}
        for (u, i), label in data.truth.labels.items():
            by_user.setdefault(u, []).append(((u, i), label))
        for u, rows in by_user.items():
            scores = [data.truth.affinity[key] for key, _ in rows]
            cut = float(np.median(scores))
            for key, label in rows:
                assert label == (1 if data.truth.affinity[key] > cut else 0)
            # even interaction count: exactly half land above the median
            assert sum(label for _, label in rows) == len(rows) // 2

    def test_ratings_binarize_back_to_planted_labels(self):
        data = generate_synthetic(small_cfg(), seed=5)
        dataset = data_mod.binarize(data.records, min_records=10)
        assert dataset.n_users == 25
        for (u, i), label in dataset.labels.items():
            key = (dataset.user_ids[u], dataset.item_ids[i])
            assert label == data.truth.labels[key]

    def test_deterministic_for_a_seed(self):
        a = generate_synthetic(small_cfg(), seed=9)
        b = generate_synthetic(small_cfg(), seed=9)
        assert a.texts == b.texts
        assert a.triples == b.triples
        assert [(r.user_id, r.item_id, r.rating) for r in a.records] == \
               [(r.user_id, r.item_id, r.rating) for r in b.records]
        c = generate_synthetic(small_cfg(), seed=10)
        assert a.texts != c.texts or a.triples != c.triples

    def test_graph_from_triples_is_usable(self):
        cfg = small_cfg()
        data = generate_synthetic(cfg, seed=1)
        dataset = data_mod.binarize(data.records, min_records=10)
        graph = kg_mod.build_item_graph(data.triples, dataset.item_ids,
                                        cfg.shared_entity_threshold)
        assert graph.n_edges > 0
        degrees = [graph.degree(i) for i in range(graph.n_nodes)]
        assert np.mean(degrees) >= 2.0

    def test_texts_cover_only_appeal_features(self):
        cfg = small_cfg()
        data = generate_synthetic(cfg, seed=2)
        for text in data.texts.values():
            tokens = text.split()
            assert len(tokens) == 2 * cfg.synth_prefer_dim
            assert all(t.startswith("p") for t in tokens)
        tails = {t.tail for t in data.triples}
        assert any(t.startswith("d") for t in tails)

    def test_interaction_budget_validated(self):
        with pytest.raises(ConfigError):
            generate_synthetic(small_cfg(synth_interactions=41))
        with pytest.raises(ConfigError):
            generate_synthetic(small_cfg(synth_interactions=2))


class TestWriteFiles:
    def test_files_feed_the_ingestion_parsers(self, tmp_path):
        cfg = small_cfg()
        data = generate_synthetic(cfg, seed=4)
        ratings = tmp_path / "ratings.tsv"
        triples = tmp_path / "triples.tsv"
        texts = tmp_path / "texts.tsv"
        write_synthetic(data, ratings, triples, texts)

        parsed = data_mod.parse_ratings(ratings)
        assert len(parsed.records) == len(data.records)
        assert not parsed.malformed
        dataset = data_mod.binarize(parsed.records, min_records=10)
        direct = data_mod.binarize(data.records, min_records=10)
        assert dataset.labels == direct.labels

        kg = kg_mod.parse_triples(triples)
        assert not kg.malformed
        assert len(kg.triples) == len(data.triples)

        assert read_item_texts(texts) == data.texts
