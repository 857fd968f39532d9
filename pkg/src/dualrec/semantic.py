"""Text side of item encoding.

Item descriptions are lowercased, whitespace-tokenized, padded or truncated
to a fixed length, turned into a sentence vector by a pluggable encoder, and
projected into the shared semantic space by a trainable affine map. Two
encoders ship: frozen precomputed vectors loaded from a file, and a trainable
hashed bag-of-words fallback that needs no external model.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, IngestionError, VocabularyError

log = logging.getLogger(__name__)

PAD_TOKEN = "<pad>"


@dataclass
class TokenSequence:
    """Exactly `length` tokens; `original_length` counts the pre-pad tokens."""

    tokens: list
    original_length: int


def tokenize_pad(text: str, length: int) -> TokenSequence:
    """Lowercase, split on whitespace, truncate the tail, pad with PAD_TOKEN."""
    if length < 1:
        raise ConfigError(f"token length must be positive, got {length}")
    words = text.lower().split()
    if not words:
        log.warning("tokenize_pad: empty text, emitting all-padding sequence")
    kept = words[:length]
    return TokenSequence(kept + [PAD_TOKEN] * (length - len(kept)), len(words))


def token_bucket(token: str, buckets: int) -> int:
    """Stable hash bucket for a token (crc32, not the per-process str hash)."""
    return zlib.crc32(token.encode("utf-8")) % buckets


class HashedBowEncoder:
    """Mean of trainable hashed token embeddings, padding excluded.

    The embedding table is the only parameter; an all-padding sequence maps
    to the zero vector.
    """

    def __init__(self, dim: int, buckets: int = 32768, seed: int = 0, name: str = "semantic/table"):
        if dim < 1 or buckets < 1:
            raise ConfigError(f"bow encoder needs positive dim and buckets, got {dim}, {buckets}")
        self.dim = dim
        self.buckets = buckets
        rng = np.random.default_rng([seed, 401])
        self.table = ad.tensor(rng.normal(0.0, 1.0 / np.sqrt(dim), size=(buckets, dim)),
                               requires_grad=True, name=name)

    def encode(self, seq: TokenSequence) -> ad.Tensor:
        idx = [token_bucket(t, self.buckets) for t in seq.tokens if t != PAD_TOKEN]
        if not idx:
            return ad.tensor(np.zeros(self.dim))
        return ad.take_rows(self.table, idx).mean(axis=0)

    def weight_matrix(self, sequences) -> np.ndarray:
        """Constant (n, buckets) matrix W with W @ table == per-row encode()."""
        out = np.zeros((len(sequences), self.buckets), dtype=np.float64)
        for row, seq in enumerate(sequences):
            idx = [token_bucket(t, self.buckets) for t in seq.tokens if t != PAD_TOKEN]
            for i in idx:
                out[row, i] += 1.0 / len(idx)
        return out

    def encode_matrix(self, weights: np.ndarray) -> ad.Tensor:
        return ad.matmul(ad.tensor(weights), self.table)

    def parameters(self) -> dict:
        return {self.table.name: self.table}


class PrecomputedEncoder:
    """Frozen per-item sentence vectors keyed by item id."""

    def __init__(self, item_ids, vectors: np.ndarray):
        vectors = np.asarray(vectors, dtype=np.float64)
        if vectors.ndim != 2 or len(item_ids) != vectors.shape[0]:
            raise ConfigError(
                f"embedding table shape {vectors.shape} does not match {len(item_ids)} ids"
            )
        self.index = {i: k for k, i in enumerate(item_ids)}
        self.vectors = vectors
        self.dim = vectors.shape[1]

    def encode(self, item_id: str) -> np.ndarray:
        if item_id not in self.index:
            raise VocabularyError(f"no precomputed embedding for item {item_id}")
        return self.vectors[self.index[item_id]]

    def matrix(self, item_ids) -> np.ndarray:
        missing = [i for i in item_ids if i not in self.index]
        if missing:
            raise VocabularyError(
                f"{len(missing)} items lack precomputed embeddings: {', '.join(missing[:10])}"
            )
        return self.vectors[[self.index[i] for i in item_ids]]

    def parameters(self) -> dict:
        return {}


class SemanticProjection:
    """Trainable affine map from encoder space into the semantic space."""

    def __init__(self, d_in: int, d_out: int, seed: int = 0, prefix: str = "semantic"):
        rng = np.random.default_rng([seed, 409])
        self.weight = ad.tensor(rng.normal(0.0, 1.0 / np.sqrt(d_in), size=(d_out, d_in)),
                                requires_grad=True, name=f"{prefix}/proj_w")
        self.bias = ad.tensor(np.zeros(d_out), requires_grad=True, name=f"{prefix}/proj_b")

    def forward(self, vectors: ad.Tensor) -> ad.Tensor:
        """(n, d_in) -> (n, d_out) rows through W v + b."""
        if vectors.ndim != 2 or vectors.shape[1] != self.weight.shape[1]:
            raise ConfigError(
                f"projection expects (*, {self.weight.shape[1]}) input, got {vectors.shape}"
            )
        return ad.matmul(vectors, self.weight.T) + self.bias

    def parameters(self) -> dict:
        return {self.weight.name: self.weight, self.bias.name: self.bias}


def project(vector, params: SemanticProjection) -> ad.Tensor:
    """Single-vector form of the projection: W v + b as a 1-D tensor."""
    v = vector if isinstance(vector, ad.Tensor) else ad.tensor(vector)
    if v.ndim != 1 or v.shape[0] != params.weight.shape[1]:
        raise ConfigError(
            f"projection expects a {params.weight.shape[1]}-vector, got shape {v.shape}"
        )
    col = ad.matmul(params.weight, v.reshape(-1, 1))
    return col.reshape(-1) + params.bias


def read_item_texts(path) -> dict:
    """`item_id<TAB>text` lines; later duplicates win with a warning."""
    texts = {}
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read item texts {path}: {exc}") from exc
    with handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise IngestionError(f"item text line {line_no} has no tab separator")
            item_id, text = line.split("\t", 1)
            if item_id in texts:
                log.warning("read_item_texts: duplicate text for %s at line %d", item_id, line_no)
            texts[item_id] = text
    return texts


def write_item_texts(texts: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for item_id in sorted(texts):
            handle.write(f"{item_id}\t{texts[item_id]}\n")


def load_embedding_file(path) -> tuple:
    """Load `(item_ids, vectors)` from the text format or the .npz variant.

    Text format: a `count dim` header line, then `item_id v1 ... v_dim`
    rows. The binary variant is a .npz holding `item_ids` and `vectors`
    arrays with the same meaning.
    """
    path = str(path)
    if path.endswith(".npz"):
        try:
            payload = np.load(path, allow_pickle=False)
        except OSError as exc:
            raise IngestionError(f"cannot read embedding file {path}: {exc}") from exc
        if "item_ids" not in payload or "vectors" not in payload:
            raise IngestionError(f"embedding archive {path} needs item_ids and vectors arrays")
        ids = [str(i) for i in payload["item_ids"]]
        vectors = np.asarray(payload["vectors"], dtype=np.float64)
    else:
        try:
            handle = open(path, "r", encoding="utf-8")
        except OSError as exc:
            raise IngestionError(f"cannot read embedding file {path}: {exc}") from exc
        with handle:
            header = handle.readline().split()
            if len(header) != 2:
                raise IngestionError(f"embedding file {path} needs a 'count dim' header")
            count, dim = int(header[0]), int(header[1])
            ids = []
            rows = []
            for line_no, line in enumerate(handle, start=2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != dim + 1:
                    raise IngestionError(
                        f"embedding line {line_no} has {len(parts) - 1} values, expected {dim}"
                    )
                ids.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
            vectors = np.asarray(rows, dtype=np.float64)
        if len(ids) != count:
            raise IngestionError(f"embedding file {path} header promises {count} rows, found {len(ids)}")
    if vectors.ndim != 2:
        raise IngestionError(f"embedding file {path} is not a 2-D table")
    return ids, vectors
