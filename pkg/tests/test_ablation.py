"""Ablation harness plumbing on a micro corpus (one seed, tiny model)."""

import json

import numpy as np
import pytest

from dualrec import data as data_mod
from dualrec import kg as kg_mod
from dualrec.ablation import (VARIANTS, ablate, paired_deltas, plot_data,
                              render_report, save_plot_data,
                              weight_sign_record)
from dualrec.config import RunConfig
from dualrec.errors import ConfigError
from dualrec.synth import generate_synthetic


def micro_results():
    cfg = RunConfig(
        synth_users=20, synth_items=30, synth_interactions=12,
        semantic_dim=8, hash_buckets=64, projection_dim=8, text_length=8,
        init_method="seeded_random", init_dim=8, gat_heads_1=2, gat_head_dim=4,
        gat_heads_2=1, struct_dim=8, attn_heads=2, history_size=4,
        learning_rate=0.01, epochs=2, patience=0, batch_size=16,
    )
    data = generate_synthetic(cfg)
    dataset = data_mod.binarize(data.records, min_records=10)
    graph = kg_mod.build_item_graph(data.triples, dataset.item_ids,
                                    cfg.shared_entity_threshold)
    return ablate(dataset, graph, cfg, texts=data.texts, seeds=(0,),
                  variants=("full", "single_view"))


class TestAblate:
    def test_variant_table_is_complete(self):
        assert set(VARIANTS) == {"full", "semantic_only", "structural_only",
                                 "single_view", "average_fusion"}
        assert VARIANTS["full"] == {}
        assert VARIANTS["semantic_only"] == {"modality": "semantic"}
        assert VARIANTS["single_view"] == {"views": "single"}

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError, match="mystery"):
            ablate(None, None, RunConfig(), variants=("mystery",))

    def test_micro_run_structure_and_report(self, tmp_path):
        results = micro_results()
        assert set(results) == {"full", "single_view"}
        full = results["full"]["runs"][0]
        assert full["seed"] == 0
        assert full["w2"] is not None
        single = results["single_view"]["runs"][0]
        assert single["w2"] is None

        report = render_report(results)
        assert "binary" in report
        assert "variant=full" in report
        assert "multi-view vs single-view" in report
        assert "w1>0 and w2<0" in report

        path = tmp_path / "plot.json"
        save_plot_data(results, path)
        payload = json.loads(path.read_text())
        assert set(payload) == {"full", "single_view"}
        assert payload["full"]["seeds"] == [0]
        assert isinstance(payload["full"]["ndcg@5"], list)


class TestComparisons:
    def crafted(self):
        def runs(aucs, w2=True):
            return {"runs": [{"seed": s, "auc": a, "ndcg": {5: a, 10: a},
                              "w1": 0.5, "w2": -0.5 if w2 else None,
                              "best_epoch": 1}
                             for s, a in enumerate(aucs)],
                    "summary": {"mean_auc": float(np.mean(aucs)),
                                "std_auc": 0.0,
                                "ndcg": {5: 0.5, 10: 0.5}}}
        return {"full": runs([0.9, 0.8, 0.7]),
                "single_view": runs([0.6, 0.85, 0.5], w2=False)}

    def test_paired_deltas_align_by_seed(self):
        deltas = paired_deltas(self.crafted(), "full", "single_view")
        assert deltas == [(0, pytest.approx(0.3)), (1, pytest.approx(-0.05)),
                          (2, pytest.approx(0.2))]

    def test_paired_deltas_require_both_variants(self):
        with pytest.raises(ConfigError):
            paired_deltas(self.crafted(), "full", "semantic_only")

    def test_weight_sign_record(self):
        signs = weight_sign_record(self.crafted(), "full")
        assert signs == [(0, 0.5, -0.5), (1, 0.5, -0.5), (2, 0.5, -0.5)]
