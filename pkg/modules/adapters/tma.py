"""Temporal-modeling adapter and its ablation variants.

The full adapter runs three stages on the layer input H (..., T, N, D):

    temporal adapter: regroup to (..., N, T, D), down-project to gamma*D with
                      GELU, multi-head self-attention across the T frames of
                      each spatial token, up-project back to D, regroup;
    LayerNorm over D;
    vanilla adapter:  up(GELU(down(x))) through the same gamma*D bottleneck.

No temporal position embedding is used, so every stage is equivariant to a
permutation of the frames. Both up-projections start at zero, which makes a
fresh adapter output exactly zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core import functional as F
from core.exceptions import DimensionError
from core.parameters import ParameterStore, scaled_uniform
from core.tensor import DiffTensor
from modules.backbone.attention import multi_head_self_attention

from .base import BaseAdapter

logger = logging.getLogger(__name__)


@dataclass
class TmaState:
    heads: int
    t_down_weight: Optional[DiffTensor] = None  # (D, gD)
    t_down_bias: Optional[DiffTensor] = None
    wq: Optional[DiffTensor] = None  # (gD, gD), no biases
    wk: Optional[DiffTensor] = None
    wv: Optional[DiffTensor] = None
    wo: Optional[DiffTensor] = None
    t_up_weight: Optional[DiffTensor] = None  # (gD, D)
    t_up_bias: Optional[DiffTensor] = None
    norm_gain: Optional[DiffTensor] = None
    norm_bias: Optional[DiffTensor] = None
    v_down_weight: Optional[DiffTensor] = None
    v_down_bias: Optional[DiffTensor] = None
    v_up_weight: Optional[DiffTensor] = None
    v_up_bias: Optional[DiffTensor] = None
    eps: float = 1e-5

    _NAMES = {
        "t_down_weight": "t_down.weight",
        "t_down_bias": "t_down.bias",
        "wq": "t_msa.wq",
        "wk": "t_msa.wk",
        "wv": "t_msa.wv",
        "wo": "t_msa.wo",
        "t_up_weight": "t_up.weight",
        "t_up_bias": "t_up.bias",
        "norm_gain": "norm.gain",
        "norm_bias": "norm.bias",
        "v_down_weight": "v_down.weight",
        "v_down_bias": "v_down.bias",
        "v_up_weight": "v_up.weight",
        "v_up_bias": "v_up.bias",
    }

    @classmethod
    def from_store(cls, store: ParameterStore, prefix: str, heads: int, eps: float = 1e-5) -> "TmaState":
        """Collect whichever adapter weights exist under `prefix`."""
        found = {
            field_name: store[f"{prefix}.{suffix}"]
            for field_name, suffix in cls._NAMES.items()
            if f"{prefix}.{suffix}" in store
        }
        return cls(heads=heads, eps=eps, **found)


def temporal_msa(x: DiffTensor, state: TmaState) -> DiffTensor:
    """Self-attention over axis -2 of x (..., N, T, gD); heads split gD."""
    width = x.shape[-1]
    if state.heads < 1 or width % state.heads:
        raise DimensionError(f"temporal attention width {width} is not divisible by {state.heads} heads")
    out, _ = multi_head_self_attention(x, state.wq, state.wk, state.wv, state.wo, state.heads)
    return out


def t_adapter(tokens: DiffTensor, state: TmaState) -> DiffTensor:
    """Temporal adapter: (..., T, N, D) -> (..., T, N, D)."""
    if tokens.ndim < 3:
        raise DimensionError(f"temporal adapter expects (..., T, N, D), got {tokens.shape}")
    per_token = tokens.swapaxes(-2, -3)
    hidden = F.gelu(F.linear(per_token, state.t_down_weight, state.t_down_bias))
    mixed = temporal_msa(hidden, state)
    return F.linear(mixed, state.t_up_weight, state.t_up_bias).swapaxes(-2, -3)


def vanilla_adapter(x: DiffTensor, state: TmaState) -> DiffTensor:
    hidden = F.gelu(F.linear(x, state.v_down_weight, state.v_down_bias))
    return F.linear(hidden, state.v_up_weight, state.v_up_bias)


def tma_forward(tokens: DiffTensor, state: TmaState) -> DiffTensor:
    temporal = t_adapter(tokens, state)
    normed = F.layer_norm(temporal, state.norm_gain, state.norm_bias, eps=state.eps)
    return vanilla_adapter(normed, state)


# ------------------------------------------------------------------ components
def _bottleneck(adapter: BaseAdapter) -> int:
    return int(round(adapter.config.tma.hidden_dim(adapter.config.backbone.embed_dim)))


def _add_temporal(adapter: BaseAdapter, store: ParameterStore, rng: np.random.Generator) -> None:
    d, hidden, p = adapter.config.backbone.embed_dim, _bottleneck(adapter), adapter.prefix
    store.add(f"{p}.t_down.weight", scaled_uniform(rng, d, (d, hidden)))
    store.add(f"{p}.t_down.bias", np.zeros(hidden))
    for proj in ("wq", "wk", "wv", "wo"):
        store.add(f"{p}.t_msa.{proj}", scaled_uniform(rng, hidden, (hidden, hidden)))
    store.add(f"{p}.t_up.weight", np.zeros((hidden, d)))
    store.add(f"{p}.t_up.bias", np.zeros(d))


def _add_vanilla(adapter: BaseAdapter, store: ParameterStore, rng: np.random.Generator) -> None:
    d, hidden, p = adapter.config.backbone.embed_dim, _bottleneck(adapter), adapter.prefix
    store.add(f"{p}.v_down.weight", scaled_uniform(rng, d, (d, hidden)))
    store.add(f"{p}.v_down.bias", np.zeros(hidden))
    store.add(f"{p}.v_up.weight", np.zeros((hidden, d)))
    store.add(f"{p}.v_up.bias", np.zeros(d))


class _StatefulAdapter(BaseAdapter):
    def state(self, store: ParameterStore) -> TmaState:
        heads = self.config.tma.resolved_heads(self.config.backbone.heads)
        return TmaState.from_store(store, self.prefix, heads, eps=self.config.backbone.ln_eps)


class NoAdapter(BaseAdapter):
    kind = "none"

    def residual(self, store: ParameterStore, tokens: DiffTensor) -> Optional[DiffTensor]:
        return None


class VanillaAdapter(_StatefulAdapter):
    """Per-frame bottleneck only; no information crosses frames."""

    kind = "vanilla"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        _add_vanilla(self, store, rng)

    def residual(self, store: ParameterStore, tokens: DiffTensor) -> DiffTensor:
        return vanilla_adapter(tokens, self.state(store))


class TemporalAdapter(_StatefulAdapter):
    kind = "temporal"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        _add_temporal(self, store, rng)

    def residual(self, store: ParameterStore, tokens: DiffTensor) -> DiffTensor:
        return t_adapter(tokens, self.state(store))


class TemporalModelingAdapter(_StatefulAdapter):
    kind = "tma"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d, p = self.config.backbone.embed_dim, self.prefix
        _add_temporal(self, store, rng)
        store.add(f"{p}.norm.gain", np.ones(d))
        store.add(f"{p}.norm.bias", np.zeros(d))
        _add_vanilla(self, store, rng)

    def residual(self, store: ParameterStore, tokens: DiffTensor) -> DiffTensor:
        return tma_forward(tokens, self.state(store))


__all__ = [
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
