"""Knowledge-graph triples and the co-item graph built from them.

Two items are linked when they share strictly more than a threshold number
of neighbor entities in the knowledge graph, counting neighbors on either
side of a triple and ignoring entities that only carry item text.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import ConfigError, IngestionError

log = logging.getLogger(__name__)

TEXT_FLAG = "text"


@dataclass(frozen=True)
class Triple:
    head: str
    relation: str
    tail: str
    text: bool = False  # marks an item -> text-entity edge


@dataclass
class ParsedTriples:
    triples: list
    malformed: list  # (line number, reason)
    duplicates: int


class ItemGraph:
    """Undirected co-item graph over a fixed item-id ordering.

    `edges` holds index pairs (i, j) with i < j; `shared_counts` keeps the
    underlying shared-entity tallies for pairs that met the threshold.
    """

    def __init__(self, item_ids, edges, threshold, shared_counts=None):
        self.item_ids = list(item_ids)
        self.item_index = {i: k for k, i in enumerate(self.item_ids)}
        self.edges = {(min(i, j), max(i, j)) for i, j in edges}
        self.threshold = threshold
        self.shared_counts = dict(shared_counts) if shared_counts else {}
        self.neighbors = [[] for _ in self.item_ids]
        for i, j in sorted(self.edges):
            self.neighbors[i].append(j)
            self.neighbors[j].append(i)
        for adjacency in self.neighbors:
            adjacency.sort()

    @property
    def n_nodes(self):
        return len(self.item_ids)

    @property
    def n_edges(self):
        return len(self.edges)

    def degree(self, node: int) -> int:
        return len(self.neighbors[node])

    def isolated(self) -> list:
        return [k for k in range(self.n_nodes) if not self.neighbors[k]]

    def adjacency_matrix(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes), dtype=np.float64)
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a


def parse_triples(path) -> ParsedTriples:
    """Read `head<TAB>relation<TAB>tail[<TAB>text]` lines.

    A literal `text` in the optional fourth column marks the tail as a text
    entity. Duplicates are dropped and counted; more than 1% malformed lines
    reject the file.
    """
    triples = []
    seen = set()
    malformed = []
    duplicates = 0
    total = 0
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read triples file {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            total += 1
            parts = line.split("\t")
            if len(parts) not in (3, 4):
                malformed.append((line_no, f"expected 3 or 4 fields, got {len(parts)}"))
                continue
            head, relation, tail = (p.strip() for p in parts[:3])
            if not head or not relation or not tail:
                malformed.append((line_no, "empty field"))
                continue
            is_text = len(parts) == 4 and parts[3].strip().lower() == TEXT_FLAG
            key = (head, relation, tail, is_text)
            if key in seen:
                duplicates += 1
                continue
            seen.add(key)
            triples.append(Triple(head, relation, tail, is_text))
    if total and len(malformed) / total > 0.01:
        shown = ", ".join(str(n) for n, _ in malformed[:20])
        raise IngestionError(
            f"{len(malformed)} of {total} triple lines malformed (>1%); first line numbers: {shown}"
        )
    return ParsedTriples(triples=triples, malformed=malformed, duplicates=duplicates)


def neighbor_sets(triples, item_ids) -> list:
    """Per-item sets of adjacent knowledge-graph entities.

    Direction is ignored and text entities are excluded everywhere: they
    carry descriptions, not structure.
    """
    items = set(item_ids)
    text_entities = {t.tail for t in triples if t.text}
    sets = {i: set() for i in item_ids}
    for t in triples:
        if t.text:
            continue
        if t.head in items and t.tail not in text_entities:
            sets[t.head].add(t.tail)
        if t.tail in items and t.head not in text_entities:
            sets[t.tail].add(t.head)
    return [sets[i] for i in item_ids]


def build_item_graph(triples, item_ids, threshold) -> ItemGraph:
    """Link items sharing strictly more than `threshold` neighbor entities.

    Pair counting runs through an inverted entity -> items index instead of
    all pairs; items without any entity end up isolated (logged).
    """
    if threshold < 0:
        raise ConfigError(f"shared-entity threshold must be non-negative, got {threshold}")
    if len(set(item_ids)) != len(list(item_ids)):
        raise ConfigError("item ids contain duplicates")
    sets = neighbor_sets(triples, item_ids)
    inverted = {}
    for idx, entities in enumerate(sets):
        for entity in entities:
            inverted.setdefault(entity, []).append(idx)
    counts = {}
    for members in inverted.values():
        for pair in combinations(members, 2):
            counts[pair] = counts.get(pair, 0) + 1
    edges = {pair for pair, c in counts.items() if c > threshold}
    graph = ItemGraph(item_ids, edges, threshold,
                      shared_counts={p: c for p, c in counts.items() if p in edges})
    orphans = [graph.item_ids[k] for k in range(graph.n_nodes) if not sets[k]]
    if orphans:
        log.warning("build_item_graph: %d items have no knowledge-graph entity: %s",
                    len(orphans), ", ".join(orphans[:10]))
    return graph


def graph_stats(graph) -> dict:
    """Node/edge counts, a degree histogram, and the isolated node ids."""
    histogram = {}
    for node in range(graph.n_nodes):
        d = graph.degree(node)
        histogram[d] = histogram.get(d, 0) + 1
    return {
        "nodes": graph.n_nodes,
        "edges": graph.n_edges,
        "threshold": graph.threshold,
        "degree_histogram": {str(k): histogram[k] for k in sorted(histogram)},
        "isolated": [graph.item_ids[k] for k in graph.isolated()],
    }


def save_graph(graph, edges_path, stats_path) -> None:
    """Edge list as `id<TAB>id` rows (index order i < j) plus a JSON stats block."""
    with open(edges_path, "w", encoding="utf-8") as handle:
        for i, j in sorted(graph.edges):
            handle.write(f"{graph.item_ids[i]}\t{graph.item_ids[j]}\n")
    stats = graph_stats(graph)
    stats["items"] = graph.item_ids
    with open(stats_path, "w", encoding="utf-8") as handle:
        json.dump(stats, handle, sort_keys=True, separators=(",", ":"))
        handle.write("\n")


def load_graph(edges_path, stats_path) -> ItemGraph:
    with open(stats_path, "r", encoding="utf-8") as handle:
        stats = json.load(handle)
    item_ids = stats["items"]
    index = {i: k for k, i in enumerate(item_ids)}
    edges = set()
    with open(edges_path, "r", encoding="utf-8") as handle:
        for line in handle:
            line = line.rstrip("\n")
            if not line:
                continue
            a, b = line.split("\t")
            edges.add((index[a], index[b]))
    return ItemGraph(item_ids, edges, stats.get("threshold"))
