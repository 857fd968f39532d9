"""Command line interface.

Every run setting is reachable three ways with increasing precedence: a
`key = value` config file (--config), DUALREC_* environment variables, and
per-key command line flags (--learning-rate and friends). Data artifacts
live in plain files inside a directory: ratings.tsv, triples.tsv,
items.texts.tsv on the raw side; dataset.json, graph.edges.tsv,
graph.stats.json, items.texts.tsv, manifest.txt, filter_report.json after
ingestion; checkpoint.bin, training.log, metrics.json and the ablation
report after modeling.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import data as data_mod
from . import kg as kg_mod
from .ablation import DEFAULT_VARIANTS, VARIANTS, ablate, render_report, save_plot_data
from .config import RunConfig, load_config
from .errors import DualrecError, IngestionError, VocabularyError
from .metrics import evaluate_checkpoint, evaluate_model
from .model import MULTI
from .semantic import load_embedding_file, read_item_texts, write_item_texts
from .synth import generate_synthetic, write_synthetic
from .train import (load_checkpoint, model_from_checkpoint, render_training_log,
                    save_checkpoint, train)

log = logging.getLogger(__name__)

DATASET_FILE = "dataset.json"
EDGES_FILE = "graph.edges.tsv"
GRAPH_STATS_FILE = "graph.stats.json"
TEXTS_FILE = "items.texts.tsv"
MANIFEST_FILE = "manifest.txt"
FILTER_REPORT_FILE = "filter_report.json"
CHECKPOINT_FILE = "checkpoint.bin"
TRAINING_LOG_FILE = "training.log"
METRICS_FILE = "metrics.json"
ABLATION_REPORT_FILE = "ablation_report.txt"
ABLATION_PLOT_FILE = "ablation_plot.json"


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="key = value settings file")
    group = parser.add_argument_group("run settings (override file and env)")
    for field in dataclasses.fields(RunConfig):
        group.add_argument(f"--{field.name.replace('_', '-')}",
                           dest=f"cfg_{field.name}", default=None, metavar="V")


def _config_from_args(args) -> RunConfig:
    overrides = {}
    for key, value in vars(args).items():
        if key.startswith("cfg_") and value is not None:
            overrides[key[len("cfg_"):]] = value
    return load_config(path=args.config, overrides=overrides)


def _ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)


def _write_text(path, content) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(content)


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


# -- subcommands --------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    data = generate_synthetic(cfg)
    _ensure_dir(args.out)
    write_synthetic(data,
                    os.path.join(args.out, "ratings.tsv"),
                    os.path.join(args.out, "triples.tsv"),
                    os.path.join(args.out, TEXTS_FILE))
    print(f"wrote {len(data.records)} ratings, {len(data.triples)} triples, "
          f"{len(data.texts)} item texts to {args.out}")
    return 0


def cmd_ingest(args) -> int:
    cfg = _config_from_args(args)
    parsed = data_mod.parse_ratings(args.ratings, delimiter=cfg.rating_delimiter)
    triples = kg_mod.parse_triples(args.triples).triples
    texts = read_item_texts(args.texts)

    with_entities = set()
    for t in triples:
        with_entities.add(t.head)
        if not t.text:
            with_entities.add(t.tail)
    eligible = {i for i in texts if i in with_entities}
    kept_records = [r for r in parsed.records if r.item_id in eligible]
    dropped_records = len(parsed.records) - len(kept_records)
    dataset = data_mod.binarize(kept_records, min_records=cfg.min_interactions)
    graph = kg_mod.build_item_graph(triples, dataset.item_ids,
                                    cfg.shared_entity_threshold)
    kept_texts = {i: texts[i] for i in dataset.item_ids}

    _ensure_dir(args.out)
    data_mod.save_dataset(dataset, os.path.join(args.out, DATASET_FILE))
    kg_mod.save_graph(graph, os.path.join(args.out, EDGES_FILE),
                      os.path.join(args.out, GRAPH_STATS_FILE))
    write_item_texts(kept_texts, os.path.join(args.out, TEXTS_FILE))
    manifest = data_mod.dataset_manifest(dataset)
    stats = kg_mod.graph_stats(graph)
    _write_text(os.path.join(args.out, MANIFEST_FILE),
                manifest + "\n" + "\n".join(f"{k}: {v}" for k, v in stats.items()) + "\n")
    report = {
        "ratings_parsed": len(parsed.records),
        "ratings_malformed": len(parsed.malformed),
        "ratings_dropped_no_modalities": dropped_records,
        "items_with_text": len(texts),
        "items_with_entities": len(with_entities & set(texts)),
        "items_kept": dataset.n_items,
        "users_kept": dataset.n_users,
    }
    _write_json(os.path.join(args.out, FILTER_REPORT_FILE), report)
    print(manifest)
    print(f"graph: {stats['edges']} edges over {stats['nodes']} items "
          f"({len(stats['isolated'])} isolated)")
    return 0


def cmd_build_graph(args) -> int:
    cfg = _config_from_args(args)
    dataset = data_mod.load_dataset(args.dataset)
    triples = kg_mod.parse_triples(args.triples).triples
    graph = kg_mod.build_item_graph(triples, dataset.item_ids,
                                    cfg.shared_entity_threshold)
    _ensure_dir(args.out)
    kg_mod.save_graph(graph, os.path.join(args.out, EDGES_FILE),
                      os.path.join(args.out, GRAPH_STATS_FILE))
    stats = kg_mod.graph_stats(graph)
    print("\n".join(f"{k}: {v}" for k, v in stats.items()))
    return 0


def _load_artifacts(data_dir, need_graph=True, need_texts=True):
    dataset = data_mod.load_dataset(os.path.join(data_dir, DATASET_FILE))
    graph = None
    edges = os.path.join(data_dir, EDGES_FILE)
    if os.path.exists(edges):
        graph = kg_mod.load_graph(edges, os.path.join(data_dir, GRAPH_STATS_FILE))
    elif need_graph:
        raise IngestionError(f"no {EDGES_FILE} in {data_dir}; run ingest first")
    texts = None
    texts_path = os.path.join(data_dir, TEXTS_FILE)
    if os.path.exists(texts_path):
        texts = read_item_texts(texts_path)
    elif need_texts:
        raise IngestionError(f"no {TEXTS_FILE} in {data_dir}; run ingest first")
    return dataset, graph, texts


def _load_embeddings(args):
    if getattr(args, "embeddings", None):
        return load_embedding_file(args.embeddings)
    return None


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    dataset, graph, texts = _load_artifacts(
        args.data,
        need_graph=cfg.modality in ("both", "structural"),
        need_texts=(cfg.modality in ("both", "semantic")
                    and cfg.semantic_encoder == "hashed_bow"),
    )
    embeddings = _load_embeddings(args)
    ckpt, stats = train(dataset, graph, cfg, texts=texts, embeddings=embeddings)
    _ensure_dir(args.out)
    save_checkpoint(ckpt, os.path.join(args.out, CHECKPOINT_FILE))
    _write_text(os.path.join(args.out, TRAINING_LOG_FILE), render_training_log(stats))
    val = ckpt.metrics.get("val_auc")
    print(f"trained {len(stats)} epochs; best epoch {ckpt.epoch}, "
          f"validation auc {'n/a' if val is None else f'{val:.4f}'}")
    print(f"checkpoint: {os.path.join(args.out, CHECKPOINT_FILE)}")
    return 0


def _tagged_dataset_for(ckpt, dataset):
    """Reproduce the checkpoint's train/validation/test split tags."""
    cfg = RunConfig.from_dict(ckpt.config)
    if dataset.user_ids != ckpt.user_ids or dataset.item_ids != ckpt.item_ids:
        raise IngestionError(
            "dataset vocabulary does not match the checkpoint; evaluate on the "
            "directory the model was trained from"
        )
    return cfg, data_mod.split(dataset, cfg.train_fraction,
                               cfg.validation_fraction, seed=cfg.seed)


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset, graph, texts = _load_artifacts(args.data, need_graph=False,
                                            need_texts=False)
    embeddings = _load_embeddings(args)
    cfg, tagged = _tagged_dataset_for(ckpt, dataset)
    split_name = {"train": data_mod.TRAIN, "validation": data_mod.VALIDATION,
                  "test": data_mod.TEST}[args.split]
    report = evaluate_checkpoint(ckpt, tagged, graph=graph, texts=texts,
                                 embeddings=embeddings, split=split_name)
    payload = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        _ensure_dir(args.out)
        _write_text(os.path.join(args.out, METRICS_FILE), payload + "\n")
    print(payload)
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    dataset, graph, texts = _load_artifacts(args.data)
    embeddings = _load_embeddings(args)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    results = ablate(dataset, graph, cfg, texts=texts, embeddings=embeddings,
                     seeds=seeds, variants=variants)
    report = render_report(results)
    _ensure_dir(args.out)
    _write_text(os.path.join(args.out, ABLATION_REPORT_FILE), report)
    save_plot_data(results, os.path.join(args.out, ABLATION_PLOT_FILE))
    print(report, end="")
    return 0


def _views_for_user(model, cfg, dataset, user_id):
    if user_id not in dataset.user_index:
        raise VocabularyError(f"unknown user {user_id}")
    u = dataset.user_index[user_id]
    history = data_mod.partial_history(dataset, u, cfg.history_size, seed=cfg.seed)
    views = model.evaluation_views(user_id, history.prefer_items,
                                   history.dislike_items)
    if views is None:
        raise VocabularyError(f"user {user_id} has no usable train history")
    return u, history, views


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset, graph, texts = _load_artifacts(args.data, need_graph=False,
                                            need_texts=False)
    embeddings = _load_embeddings(args)
    cfg, tagged = _tagged_dataset_for(ckpt, dataset)
    model, _ = model_from_checkpoint(ckpt, graph=graph, texts=texts,
                                     embeddings=embeddings)
    u, _, views = _views_for_user(model, cfg, tagged, args.user)
    if args.items:
        names = [i.strip() for i in args.items.split(",") if i.strip()]
        missing = [i for i in names if i not in tagged.item_index]
        if missing:
            raise VocabularyError(f"unknown items: {', '.join(missing)}")
        candidates = [tagged.item_index[i] for i in names]
    else:
        seen = set(tagged.split_items(u, data_mod.TRAIN))
        candidates = [i for i in range(tagged.n_items) if i not in seen]
    scores = model.score_candidates(views, model.item_matrix().values, candidates)
    order = sorted(range(len(candidates)), key=lambda j: (-scores[j], candidates[j]))
    top = order if args.items else order[:args.top]
    for j in top:
        print(f"{tagged.item_ids[candidates[j]]}\t{scores[j]:.6f}")
    return 0


def cmd_export_attention(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset, graph, texts = _load_artifacts(args.data, need_graph=False,
                                            need_texts=False)
    embeddings = _load_embeddings(args)
    cfg, tagged = _tagged_dataset_for(ckpt, dataset)
    model, _ = model_from_checkpoint(ckpt, graph=graph, texts=texts,
                                     embeddings=embeddings)
    payload = {"user": args.user}
    item_matrix = model.item_matrix()
    u = None
    if args.user:
        if args.user not in tagged.user_index:
            raise VocabularyError(f"unknown user {args.user}")
        u = tagged.user_index[args.user]
        history = data_mod.partial_history(tagged, u, cfg.history_size,
                                           seed=cfg.seed)
        if model.views_mode == MULTI:
            if not history.prefer_items or not history.dislike_items:
                raise VocabularyError(
                    f"user {args.user} lacks a view; cannot export attention"
                )
            views = model.user_views(history, item_matrix=item_matrix,
                                     export_attention=True)
        else:
            items = history.prefer_items + history.dislike_items
            views = model.user_views((args.user, items), item_matrix=item_matrix,
                                     export_attention=True)
        payload["history"] = {
            "prefer": [tagged.item_ids[i] for i in history.prefer_items],
            "dislike": [tagged.item_ids[i] for i in history.dislike_items],
        }
        payload["view_attention"] = {
            view: [head.tolist() for head in heads]
            for view, heads in views.attention.items()
        }
    if args.item and model.structural is not None:
        if args.item not in tagged.item_index:
            raise VocabularyError(f"unknown item {args.item}")
        node = tagged.item_index[args.item]
        mask = model.structural.mask
        neighbors = [int(j) for j in np.flatnonzero(mask[node])]
        alphas = model.structural.layer1.attention(
            model.structural.init_vectors, mask)
        payload["graph_attention"] = {
            "item": args.item,
            "neighbors": [tagged.item_ids[j] for j in neighbors],
            "heads": [alpha[node, neighbors].tolist() for alpha in alphas],
        }
    text = json.dumps(payload, indent=2, sort_keys=True)
    if args.out:
        _write_text(args.out, text + "\n")
        print(f"wrote attention export to {args.out}")
    else:
        print(text)
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualrec",
        description="dual-view recommender over item text and an item graph",
    )
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a planted synthetic corpus")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="filter, binarize, and build the item graph")
    p.add_argument("--ratings", required=True, metavar="FILE")
    p.add_argument("--triples", required=True, metavar="FILE")
    p.add_argument("--texts", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graph", help="rebuild the item graph from triples")
    p.add_argument("--triples", required=True, metavar="FILE")
    p.add_argument("--dataset", required=True, metavar="FILE")
    p.add_argument("--out", required=True, metavar="DIR")
    _add_config_flags(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("train", help="train a model on an ingested directory")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--embeddings", metavar="FILE",
                   help="precomputed text embeddings (for semantic_encoder=precomputed)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on held-out data")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--split", choices=("train", "validation", "test"),
                   default="test")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--embeddings", metavar="FILE")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="run model variants over several seeds")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--seeds", default="0,1,2,3,4", metavar="CSV")
    p.add_argument("--variants", default=",".join(DEFAULT_VARIANTS), metavar="CSV",
                   help=f"subset of: {', '.join(sorted(VARIANTS))}")
    p.add_argument("--embeddings", metavar="FILE")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("predict", help="rank items for one user")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--user", required=True, metavar="ID")
    p.add_argument("--items", metavar="CSV", help="score only these items")
    p.add_argument("--top", type=int, default=10, metavar="N")
    p.add_argument("--embeddings", metavar="FILE")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-attention",
                       help="dump attention weights for inspection")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--checkpoint", required=True, metavar="FILE")
    p.add_argument("--user", metavar="ID")
    p.add_argument("--item", metavar="ID",
                   help="also export this item's graph-attention row")
    p.add_argument("--out", metavar="FILE")
    p.add_argument("--embeddings", metavar="FILE")
    p.set_defaults(func=cmd_export_attention)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except DualrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
