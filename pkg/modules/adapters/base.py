"""Base class for adapter components."""
from __future__ import annotations

from typing import Optional

import numpy as np

from core.config import RunConfig
from core.parameters import ParameterStore
from core.tensor import DiffTensor


class BaseAdapter:
    """
    One adapter per encoder layer.
    Maps the layer input H (..., T, N, D) to residual tokens of the same
    shape, or to None when the adapter contributes nothing.
    """
    kind = "base"

    def __init__(self, index: int, config: RunConfig):
        self.index = index
        self.config = config
        self.prefix = f"{self.kind}.{index}"

    def init_params(self, store: ParameterStore, rng: np.random.Generator) -> None:
        """Register parameters; adapters without weights register nothing."""

    def residual(self, store: ParameterStore, tokens: DiffTensor) -> Optional[DiffTensor]:
        raise NotImplementedError("Subclasses must implement residual()")
