"""Run configuration with file < environment < flag layering.

One flat key space covers every module. Files are `key = value` lines,
environment variables use the DUALREC_ prefix, and command-line flags mirror
the keys with dashes. Unknown keys are rejected by name at every layer.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from .errors import ConfigError

ENV_PREFIX = "DUALREC_"


@dataclass
class RunConfig:
    seed: int = 0

    # data pipeline
    min_interactions: int = 10
    train_fraction: float = 0.7
    validation_fraction: float = 0.1
    history_size: int = 10
    negative_rate: int = 4
    batch_size: int = 16
    rating_delimiter: str = "\t"

    # co-item graph
    shared_entity_threshold: int = 2

    # semantic encoder
    semantic_encoder: str = "hashed_bow"  # or "precomputed"
    semantic_dim: int = 256               # encoder output; 768 fits the usual precomputed files
    hash_buckets: int = 32768
    projection_dim: int = 256
    text_length: int = 50

    # structural encoder
    init_method: str = "sdne_lite"
    init_dim: int = 256
    freeze_init: bool = False
    gat_heads_1: int = 12
    gat_head_dim: int = 32
    gat_heads_2: int = 2
    struct_dim: int = 256
    gat_dropout: float = 0.4
    leaky_slope: float = 0.2
    sdne_epochs: int = 80
    sdne_lr: float = 0.01
    sdne_edge_weight: float = 5.0
    sdne_proximity_weight: float = 1.0

    # fusion and user views
    modality: str = "both"        # both | semantic | structural
    aggregation: str = "concat"   # concat | average
    views: str = "multi"          # multi | single
    attn_heads: int = 4
    attn_dropout: float = 0.3
    tie_views: bool = False

    # training
    learning_rate: float = 1e-3
    epochs: int = 30
    patience: int = 5
    w1_init: float = 1.0
    w2_init: float = -1.0

    # synthetic data
    synth_users: int = 200
    synth_items: int = 100
    synth_prefer_dim: int = 4
    synth_dislike_dim: int = 2
    synth_noise: float = 0.3
    synth_interactions: int = 40
    synth_graph_degree: int = 6

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, mapping: dict) -> "RunConfig":
        _reject_unknown(mapping, "checkpoint config")
        return cls(**mapping)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _reject_unknown(mapping, source) -> None:
    unknown = [k for k in mapping if k not in _FIELDS]
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r} from {source}")


def _coerce(name: str, raw, source) -> object:
    """Coerce a raw (usually string) value to the field's declared type."""
    kind = _FIELDS[name].type
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind == "bool":
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"bad value {raw!r} for {name} from {source}") from exc
    if name == "rating_delimiter":
        return text.replace("\\t", "\t") or "\t"
    return text


def read_config_file(path) -> dict:
    """`key = value` lines; blank lines and # comments ignored."""
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"config line {line_no} is not key=value: {stripped!r}")
            key, value = stripped.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def load_config(path=None, env=None, overrides=None) -> RunConfig:
    """Layer file, then DUALREC_* environment variables, then overrides."""
    merged = {}
    if path is not None:
        file_values = read_config_file(path)
        _reject_unknown(file_values, f"config file {path}")
        for key, value in file_values.items():
            merged[key] = _coerce(key, value, f"config file {path}")
    env = os.environ if env is None else env
    for name, value in sorted(env.items()):
        if not name.startswith(ENV_PREFIX):
            continue
        key = name[len(ENV_PREFIX):].lower()
        _reject_unknown({key: value}, f"environment variable {name}")
        merged[key] = _coerce(key, value, f"environment variable {name}")
    if overrides:
        _reject_unknown(overrides, "command line")
        for key, value in overrides.items():
            merged[key] = _coerce(key, value, "command line")
    return RunConfig(**merged)
