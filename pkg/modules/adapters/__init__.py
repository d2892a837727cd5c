"""Temporal adapters inserted between encoder layers."""

from .base import BaseAdapter
from .tma import (
    NoAdapter,
    TemporalAdapter,
    TemporalModelingAdapter,
    TmaState,
    VanillaAdapter,
    t_adapter,
    temporal_msa,
    tma_forward,
    vanilla_adapter,
)

__all__ = [
    "BaseAdapter",
    "NoAdapter",
    "TemporalAdapter",
    "TemporalModelingAdapter",
    "TmaState",
    "VanillaAdapter",
    "t_adapter",
    "temporal_msa",
    "tma_forward",
    "vanilla_adapter",
]
