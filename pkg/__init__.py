"""Top-level package API for s2d (single-root layout).

Exports:
- S2DModel / ModelOutput from core.model
- RunConfig from core.config
- Trainer / train from core.trainer
- evaluate / compute_metrics from core.evaluation
- Exception types from core.exceptions
- CLI main from CLI.main
- __version__ from __version__
"""

from __future__ import annotations

from .core.config import RunConfig
from .core.evaluation import ConfusionMatrix, compute_metrics, evaluate
from .core.exceptions import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    DataFormatError,
    DimensionError,
    NumericError,
    S2DError,
)
from .core.model import ModelOutput, S2DModel
from .core.trainer import Trainer, train
from .CLI import main
from .__version__ import __version__

__all__ = [
    "CheckpointError",
    "ConfigurationError",
    "ConfusionMatrix",
    "ContractError",
    "DataFormatError",
    "DimensionError",
    "ModelOutput",
    "NumericError",
    "RunConfig",
    "S2DError",
    "S2DModel",
    "Trainer",
    "compute_metrics",
    "evaluate",
    "main",
    "train",
    "__version__",
]
