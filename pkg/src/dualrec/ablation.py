"""Ablation harness: named model variants over shared data and seeds.

Each variant is a small set of configuration overrides on top of the run
configuration. Every (variant, seed) cell re-splits, retrains, and evaluates
through the same experiment path, so differences come from the variant alone.
"""

from __future__ import annotations

import dataclasses
import json
import logging

import numpy as np

from .errors import ConfigError
from .metrics import DEFAULT_NDCG_KS, run_experiment

log = logging.getLogger(__name__)

VARIANTS = {
    "full": {},
    "semantic_only": {"modality": "semantic"},
    "structural_only": {"modality": "structural"},
    "single_view": {"views": "single"},
    "average_fusion": {"aggregation": "average"},
}

DEFAULT_VARIANTS = ("full", "semantic_only", "structural_only", "single_view")


def ablate(dataset, graph, cfg, texts=None, embeddings=None,
           seeds=(0, 1, 2, 3, 4), variants=DEFAULT_VARIANTS,
           ks=DEFAULT_NDCG_KS) -> dict:
    """Run every requested variant over every seed; returns variant -> result."""
    unknown = [v for v in variants if v not in VARIANTS]
    if unknown:
        raise ConfigError(
            f"unknown variants {unknown}; available: {sorted(VARIANTS)}"
        )
    results = {}
    for name in variants:
        run_cfg = dataclasses.replace(cfg, **VARIANTS[name])
        log.info("ablation variant %s over seeds %s", name, list(seeds))
        results[name] = run_experiment(dataset, graph, run_cfg, texts=texts,
                                       embeddings=embeddings, seeds=seeds, ks=ks)
    return results


def paired_deltas(results: dict, left: str, right: str) -> list:
    """(seed, auc_left - auc_right) for seeds where both variants scored."""
    if left not in results or right not in results:
        raise ConfigError(f"need both {left!r} and {right!r} in the results")
    right_by_seed = {r["seed"]: r["auc"] for r in results[right]["runs"]}
    deltas = []
    for run in results[left]["runs"]:
        other = right_by_seed.get(run["seed"])
        if run["auc"] is None or other is None:
            continue
        deltas.append((run["seed"], run["auc"] - other))
    return deltas


def weight_sign_record(results: dict, variant: str = "full") -> list:
    """Per-seed (seed, w1, w2) for a variant, in seed order."""
    return [(r["seed"], r["w1"], r["w2"]) for r in results[variant]["runs"]]


def _fmt(value, width=8):
    return "     n/a" if value is None else f"{value:{width}.4f}"


def render_report(results: dict, ks=DEFAULT_NDCG_KS) -> str:
    """Human-readable ablation summary.

    Note: NDCG uses binary gains (relevance 1 or 0) under the 1/log2(rank+1)
    discount, so graded-gain figures from other toolkits are not comparable.
    """
    lines = [
        "ablation report",
        "ndcg gains are binary (1/0) with the 1/log2(rank+1) discount",
        "",
    ]
    for name, result in results.items():
        summary = result["summary"]
        ndcg_bits = " ".join(
            f"ndcg@{k}={_fmt(summary['ndcg'].get(k))}" for k in ks
        )
        lines.append(
            f"variant={name} mean_auc={_fmt(summary['mean_auc'])} "
            f"std_auc={_fmt(summary['std_auc'])} {ndcg_bits}"
        )
        for run in result["runs"]:
            w2 = "n/a" if run["w2"] is None else f"{run['w2']:+.4f}"
            lines.append(
                f"  seed={run['seed']} auc={_fmt(run['auc'])} "
                f"w1={run['w1']:+.4f} w2={w2} best_epoch={run['best_epoch']}"
            )
        lines.append("")
    if "full" in results and "single_view" in results:
        deltas = paired_deltas(results, "full", "single_view")
        if deltas:
            wins = sum(1 for _, d in deltas if d > 0)
            mean_delta = float(np.mean([d for _, d in deltas]))
            lines.append(
                f"multi-view vs single-view: wins {wins}/{len(deltas)}, "
                f"mean auc delta {mean_delta:+.4f}"
            )
    for other in ("semantic_only", "structural_only"):
        if "full" in results and other in results:
            deltas = paired_deltas(results, "full", other)
            if deltas:
                mean_delta = float(np.mean([d for _, d in deltas]))
                lines.append(
                    f"both modalities vs {other}: mean auc delta {mean_delta:+.4f}"
                )
    if "full" in results:
        signs = weight_sign_record(results, "full")
        good = sum(1 for _, w1, w2 in signs if w1 > 0 and w2 is not None and w2 < 0)
        lines.append(
            f"view weights: w1>0 and w2<0 in {good}/{len(signs)} seeds"
        )
    return "\n".join(lines) + "\n"


def plot_data(results: dict, ks=DEFAULT_NDCG_KS) -> dict:
    """JSON-serializable per-variant series for external plotting."""
    out = {}
    for name, result in results.items():
        runs = result["runs"]
        out[name] = {
            "seeds": [r["seed"] for r in runs],
            "auc": [r["auc"] for r in runs],
            "mean_auc": result["summary"]["mean_auc"],
            "w1": [r["w1"] for r in runs],
            "w2": [r["w2"] for r in runs],
        }
        for k in ks:
            out[name][f"ndcg@{k}"] = [r["ndcg"][k] for r in runs]
    return out


def save_plot_data(results: dict, path, ks=DEFAULT_NDCG_KS) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(plot_data(results, ks), handle, indent=2, sort_keys=True)
        handle.write("\n")
