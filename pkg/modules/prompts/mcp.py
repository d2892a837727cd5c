"""Multi-view complementary prompter.

Both views are laid out on the sqrt(N) x sqrt(N) patch grid and squeezed to
D' channels by 1x1 convolutions. The expression view is re-weighted by a
per-channel spatial softmax (the fovea map, scaled by a learned scalar
lambda), the landmark view is added, and a third 1x1 convolution lifts the
result back to D channels:

    P = g3(Mh * lambda * softmax_spatial(Mh) + Ma)

g3 starts at zero, so a fresh prompter emits P = 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core import functional as F
from core.exceptions import DimensionError
from core.parameters import ParameterStore, scaled_uniform
from core.tensor import DiffTensor

from .base import BaseFusion

logger = logging.getLogger(__name__)


@dataclass
class McpState:
    g1_weight: DiffTensor  # (D', D)
    g1_bias: DiffTensor
    g2_weight: DiffTensor  # (D', D)
    g2_bias: DiffTensor
    g3_weight: DiffTensor  # (D, D')
    g3_bias: DiffTensor
    lam: DiffTensor  # scalar

    @classmethod
    def from_store(cls, store: ParameterStore, prefix: str) -> "McpState":
        return cls(
            g1_weight=store[f"{prefix}.g1.weight"],
            g1_bias=store[f"{prefix}.g1.bias"],
            g2_weight=store[f"{prefix}.g2.weight"],
            g2_bias=store[f"{prefix}.g2.bias"],
            g3_weight=store[f"{prefix}.g3.weight"],
            g3_bias=store[f"{prefix}.g3.bias"],
            lam=store[f"{prefix}.lam"],
        )


def tokens_to_grid(tokens: DiffTensor) -> DiffTensor:
    """(..., N, D) -> (..., D, g, g), row-major patch order."""
    *lead, num_patches, width = tokens.shape
    side = math.isqrt(num_patches)
    if side * side != num_patches:
        raise DimensionError(f"token count {num_patches} is not a perfect square (tokens {tokens.shape})")
    return tokens.swapaxes(-1, -2).reshape(tuple(lead) + (width, side, side))


def grid_to_tokens(grid: DiffTensor) -> DiffTensor:
    *lead, width, rows, cols = grid.shape
    return grid.reshape(tuple(lead) + (width, rows * cols)).swapaxes(-1, -2)


def project_views(tokens: DiffTensor, landmarks: DiffTensor, state: McpState) -> Tuple[DiffTensor, DiffTensor]:
    """Project both views to D' channels on the patch grid.

    Returns:
        (Mh, Ma), each (..., D', g, g)
    """
    if tokens.shape != landmarks.shape:
        raise DimensionError(f"expression tokens {tokens.shape} and landmark tokens {landmarks.shape} differ")
    mh = F.conv1x1(tokens_to_grid(tokens), state.g1_weight, state.g1_bias)
    ma = F.conv1x1(tokens_to_grid(landmarks), state.g2_weight, state.g2_bias)
    return mh, ma


def fovea_attention(mh: DiffTensor, lam: DiffTensor) -> DiffTensor:
    """lambda * softmax over the spatial positions of every channel slice."""
    *lead, rows, cols = mh.shape
    flat = mh.reshape(tuple(lead) + (rows * cols,))
    weights = F.softmax(flat, axis=-1).reshape(mh.shape)
    return F.mul(weights, lam)


def generate_prompts(tokens: DiffTensor, landmarks: DiffTensor, state: McpState) -> DiffTensor:
    """Guiding prompts (..., N, D) for the patch tokens."""
    mh, ma = project_views(tokens, landmarks, state)
    fused = F.add(F.mul(mh, fovea_attention(mh, state.lam)), ma)
    return grid_to_tokens(F.conv1x1(fused, state.g3_weight, state.g3_bias))


class MultiViewPrompter(BaseFusion):
    """Registry component wrapping `generate_prompts` for one encoder layer."""

    kind = "mcp"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.config.backbone.embed_dim
        bottleneck = self.config.mcp.resolved_bottleneck(d)
        p = self.prefix
        store.add(f"{p}.g1.weight", scaled_uniform(rng, d, (bottleneck, d)))
        store.add(f"{p}.g1.bias", np.zeros(bottleneck))
        store.add(f"{p}.g2.weight", scaled_uniform(rng, d, (bottleneck, d)))
        store.add(f"{p}.g2.bias", np.zeros(bottleneck))
        store.add(f"{p}.g3.weight", np.zeros((d, bottleneck)))
        store.add(f"{p}.g3.bias", np.zeros(d))
        store.add(f"{p}.lam", np.array(self.config.mcp.lambda_init))

    def prompts(self, store: ParameterStore, tokens: DiffTensor, landmarks: DiffTensor) -> DiffTensor:
        return generate_prompts(tokens, landmarks, McpState.from_store(store, self.prefix))


__all__ = [
    "McpState",
    "MultiViewPrompter",
    "fovea_attention",
    "generate_prompts",
    "grid_to_tokens",
    "project_views",
    "tokens_to_grid",
]
