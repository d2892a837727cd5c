"""Fusion baselines: no prompts, and concatenation followed by a projection."""
from __future__ import annotations

from typing import Optional

import numpy as np

from core import functional as F
from core.exceptions import DimensionError
from core.parameters import ParameterStore
from core.tensor import DiffTensor

from .base import BaseFusion


class NoFusion(BaseFusion):
    kind = "none"

    def prompts(self, store: ParameterStore, tokens: DiffTensor, landmarks: DiffTensor) -> Optional[DiffTensor]:
        return None

    @property
    def uses_landmarks(self) -> bool:
        return False


class ConcatProjectFusion(BaseFusion):
    """P = [H, A] W + b with W: 2D -> D, zero-initialized."""

    kind = "cap"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        d = self.config.backbone.embed_dim
        store.add(f"{self.prefix}.proj.weight", np.zeros((2 * d, d)))
        store.add(f"{self.prefix}.proj.bias", np.zeros(d))

    def prompts(self, store: ParameterStore, tokens: DiffTensor, landmarks: DiffTensor) -> DiffTensor:
        if tokens.shape != landmarks.shape:
            raise DimensionError(f"expression tokens {tokens.shape} and landmark tokens {landmarks.shape} differ")
        joined = F.concat([tokens, landmarks], axis=-1)
        return F.linear(joined, store[f"{self.prefix}.proj.weight"], store[f"{self.prefix}.proj.bias"])


__all__ = ["ConcatProjectFusion", "NoFusion"]
