"""Fusing the semantic and structural item encodings."""

from __future__ import annotations

from . import autodiff as ad
from .errors import ConfigError


def aggregate_concat(semantic: ad.Tensor, structural: ad.Tensor) -> ad.Tensor:
    """Row-wise concatenation; output width is the sum of both widths."""
    if semantic.ndim != structural.ndim or semantic.shape[:-1] != structural.shape[:-1]:
        raise ConfigError(
            f"cannot concatenate encodings with shapes {semantic.shape} and {structural.shape}"
        )
    return ad.concat([semantic, structural], axis=-1)


def aggregate_average(semantic: ad.Tensor, structural: ad.Tensor) -> ad.Tensor:
    """Element-wise mean; both encodings must share one dimensionality."""
    if semantic.shape != structural.shape:
        raise ConfigError(
            f"average aggregation needs matching shapes, got {semantic.shape} and {structural.shape}"
        )
    return (semantic + structural) * 0.5
