"""Patch embedding, position embedding and pre-norm encoder layers.

Token layout: frames arrive as (..., T, C, H, W) and become token grids
(..., T, N, D), with patches in row-major order (patch n covers grid row
n // g and column n % g, g = H / p). The class token of each frame is kept
apart as (..., T, D) between layers and only joins its frame's patch tokens
inside the spatial attention.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from core import functional as F
from core.config import BackboneConfig
from core.exceptions import DimensionError
from core.parameters import ParameterStore, scaled_uniform, trunc_normal
from core.tensor import DiffTensor

from .attention import multi_head_self_attention

logger = logging.getLogger(__name__)

BACKBONE = "backbone"


def patchify(images: DiffTensor, patch_size: int) -> DiffTensor:
    """(..., C, H, W) -> (..., N, C*p*p) with row-major patch order."""
    if images.ndim < 3:
        raise DimensionError(f"patchify expects (..., C, H, W), got {images.shape}")
    *lead, channels, height, width = images.shape
    if patch_size < 1 or height % patch_size or width % patch_size:
        raise DimensionError(f"image {height}x{width} is not divisible by patch size {patch_size}")
    rows, cols = height // patch_size, width // patch_size
    lead = tuple(lead)
    split = images.reshape(lead + (channels, rows, patch_size, cols, patch_size))
    k = len(lead)
    axes = tuple(range(k)) + (k + 1, k + 3, k, k + 2, k + 4)
    grouped = F.transpose(split, axes)
    return grouped.reshape(lead + (rows * cols, channels * patch_size * patch_size))


def patch_embed(
    images: DiffTensor, weight: DiffTensor, bias: Optional[DiffTensor], patch_size: int
) -> DiffTensor:
    """Project every p x p patch to the embedding width: (..., C, H, W) -> (..., N, D)."""
    patches = patchify(images, patch_size)
    if patches.shape[-1] != weight.shape[0]:
        raise DimensionError(f"patch width {patches.shape[-1]} does not fit embedding weight {weight.shape}")
    return F.linear(patches, weight, bias)


def add_position_embedding(tokens: DiffTensor, pos: DiffTensor) -> DiffTensor:
    """Add one learned vector per token slot, shared across frames."""
    if tokens.shape[-2:] != pos.shape:
        raise DimensionError(f"position embedding {pos.shape} does not fit tokens {tokens.shape}")
    return F.add(tokens, pos)


@dataclass
class EncoderLayerState:
    norm1_gain: DiffTensor
    norm1_bias: DiffTensor
    wq: DiffTensor
    bq: DiffTensor
    wk: DiffTensor
    bk: DiffTensor
    wv: DiffTensor
    bv: DiffTensor
    wo: DiffTensor
    bo: DiffTensor
    norm2_gain: DiffTensor
    norm2_bias: DiffTensor
    fc1_weight: DiffTensor
    fc1_bias: DiffTensor
    fc2_weight: DiffTensor
    fc2_bias: DiffTensor

    @classmethod
    def from_store(cls, store: ParameterStore, index: int) -> "EncoderLayerState":
        p = f"{BACKBONE}.layers.{index}"
        return cls(
            norm1_gain=store[f"{p}.norm1.gain"],
            norm1_bias=store[f"{p}.norm1.bias"],
            wq=store[f"{p}.attn.wq"],
            bq=store[f"{p}.attn.bq"],
            wk=store[f"{p}.attn.wk"],
            bk=store[f"{p}.attn.bk"],
            wv=store[f"{p}.attn.wv"],
            bv=store[f"{p}.attn.bv"],
            wo=store[f"{p}.attn.wo"],
            bo=store[f"{p}.attn.bo"],
            norm2_gain=store[f"{p}.norm2.gain"],
            norm2_bias=store[f"{p}.norm2.bias"],
            fc1_weight=store[f"{p}.mlp.fc1.weight"],
            fc1_bias=store[f"{p}.mlp.fc1.bias"],
            fc2_weight=store[f"{p}.mlp.fc2.weight"],
            fc2_bias=store[f"{p}.mlp.fc2.bias"],
        )


def encoder_layer_forward(
    x_class: DiffTensor,
    tokens: DiffTensor,
    layer: EncoderLayerState,
    heads: int,
    eps: float = 1e-5,
) -> Tuple[DiffTensor, DiffTensor, DiffTensor]:
    """One pre-norm transformer block applied to each frame independently.

    Args:
        x_class: class tokens (..., T, D)
        tokens: patch tokens (..., T, N, D)
        layer: weights of the block
        heads: spatial attention heads

    Returns:
        (class tokens (..., T, D), patch tokens (..., T, N, D),
         attention weights (..., T, heads, N+1, N+1))
    """
    if x_class.shape != tokens.shape[:-2] + tokens.shape[-1:]:
        raise DimensionError(f"class tokens {x_class.shape} do not match patch tokens {tokens.shape}")
    lead = x_class.shape[:-1]
    width = x_class.shape[-1]
    num_patches = tokens.shape[-2]

    x = F.concat([x_class.reshape(lead + (1, width)), tokens], axis=-2)

    normed = F.layer_norm(x, layer.norm1_gain, layer.norm1_bias, eps=eps)
    attended, weights = multi_head_self_attention(
        normed, layer.wq, layer.wk, layer.wv, layer.wo, heads,
        bq=layer.bq, bk=layer.bk, bv=layer.bv, bo=layer.bo,
    )
    x = F.add(x, attended)

    normed = F.layer_norm(x, layer.norm2_gain, layer.norm2_bias, eps=eps)
    hidden = F.gelu(F.linear(normed, layer.fc1_weight, layer.fc1_bias))
    x = F.add(x, F.linear(hidden, layer.fc2_weight, layer.fc2_bias))

    new_class = F.narrow(x, -2, 0, 1).reshape(lead + (width,))
    new_tokens = F.narrow(x, -2, 1, num_patches + 1)
    return new_class, new_tokens, weights


# ---------------------------------------------------------------- initialization
def init_patch_embed(
    store: ParameterStore,
    prefix: str,
    in_channels: int,
    patch_size: int,
    embed_dim: int,
    rng: np.random.Generator,
    tunable: bool = True,
) -> None:
    fan_in = in_channels * patch_size * patch_size
    store.add(f"{prefix}.weight", scaled_uniform(rng, fan_in, (fan_in, embed_dim)), tunable)
    store.add(f"{prefix}.bias", np.zeros(embed_dim), tunable)


def _add_norm(store: ParameterStore, prefix: str, width: int) -> None:
    store.add(f"{prefix}.gain", np.ones(width))
    store.add(f"{prefix}.bias", np.zeros(width))


def init_backbone(store: ParameterStore, cfg: BackboneConfig, rng: np.random.Generator) -> None:
    """Register the image encoder's parameters under ``backbone.*``."""
    d = cfg.embed_dim
    hidden = cfg.mlp_ratio * d
    init_patch_embed(store, f"{BACKBONE}.patch_embed", cfg.channels, cfg.patch_size, d, rng)
    store.add(f"{BACKBONE}.cls_token", trunc_normal(rng, (d,)))
    store.add(f"{BACKBONE}.pos_embed", trunc_normal(rng, (cfg.num_patches + 1, d)))
    for index in range(cfg.layers):
        p = f"{BACKBONE}.layers.{index}"
        _add_norm(store, f"{p}.norm1", d)
        for proj in ("q", "k", "v", "o"):
            store.add(f"{p}.attn.w{proj}", scaled_uniform(rng, d, (d, d)))
            store.add(f"{p}.attn.b{proj}", np.zeros(d))
        _add_norm(store, f"{p}.norm2", d)
        store.add(f"{p}.mlp.fc1.weight", scaled_uniform(rng, d, (d, hidden)))
        store.add(f"{p}.mlp.fc1.bias", np.zeros(hidden))
        store.add(f"{p}.mlp.fc2.weight", scaled_uniform(rng, hidden, (hidden, d)))
        store.add(f"{p}.mlp.fc2.bias", np.zeros(d))
    _add_norm(store, f"{BACKBONE}.norm", d)
    logger.debug("Initialized backbone: %d layers, %d patches, width %d", cfg.layers, cfg.num_patches, d)


__all__ = [
    "BACKBONE",
    "EncoderLayerState",
    "add_position_embedding",
    "encoder_layer_forward",
    "init_backbone",
    "init_patch_embed",
    "patch_embed",
    "patchify",
]
