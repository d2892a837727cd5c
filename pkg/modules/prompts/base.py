"""Base class for prompt fusion components."""
from __future__ import annotations

from typing import Optional

import numpy as np

from core.config import RunConfig
from core.parameters import ParameterStore
from core.tensor import DiffTensor


class BaseFusion:
    """
    One fusion block per encoder layer.
    Subclasses register their parameters under `prefix` and map the expression
    tokens H and landmark tokens A, both (..., T, N, D), to prompts of the
    same shape, or to None when the block contributes nothing.
    """
    kind = "base"

    def __init__(self, index: int, config: RunConfig):
        self.index = index
        self.config = config
        self.prefix = f"{self.kind}.{index}"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        """Register parameters; blocks without weights register nothing."""

    def prompts(self, store: ParameterStore, tokens: DiffTensor, landmarks: DiffTensor) -> Optional[DiffTensor]:
        raise NotImplementedError("Subclasses must implement prompts()")

    @property
    def uses_landmarks(self) -> bool:
        return True
