"""Supervision signals selectable by name for the supervision ablation."""
from __future__ import annotations

import logging
from typing import Optional, Sequence

import numpy as np

from core.config import RunConfig
from core.tensor import DiffTensor

from .sdl import AnchorQueues, LossBreakdown, eta_schedule, soft_labels_for_batch, total_loss

logger = logging.getLogger(__name__)


class BaseSupervision:
    """
    Turns logits, labels and (optionally) anchor queues into a loss.
    Supervisions that use anchors own an `AnchorQueues` instance which the
    trainer feeds after every optimizer step.
    """
    kind = "base"

    def __init__(self, config: RunConfig):
        self.config = config
        self.queues: Optional[AnchorQueues] = None

    @property
    def uses_queues(self) -> bool:
        return self.queues is not None

    def eta(self, epoch: int, total_epochs: int) -> float:
        return 0.0

    def loss(
        self,
        logits: DiffTensor,
        labels: Sequence[int],
        features: np.ndarray,
        eta: float,
    ) -> LossBreakdown:
        raise NotImplementedError("Subclasses must implement loss()")

    def observe(self, features: np.ndarray, probs: np.ndarray, labels: Sequence[int]) -> None:
        """Record detached outputs of a finished step."""


class OneHotSupervision(BaseSupervision):
    kind = "one_hot"

    def loss(self, logits, labels, features, eta):
        return total_loss(logits, labels, None, 0.0)


class LabelSmoothingSupervision(BaseSupervision):
    """Cross-entropy against (1 - eps) * one_hot + eps / C."""

    kind = "label_smoothing"

    def loss(self, logits, labels, features, eta):
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        num_classes = logits.shape[-1]
        eps = self.config.sdl.label_smoothing
        targets = np.full((len(labels), num_classes), eps / num_classes, dtype=logits.dtype)
        targets[np.arange(len(labels)), labels] += 1.0 - eps
        return total_loss(logits, labels, None, 0.0, hard_targets=targets)


class SelfDistillationSupervision(BaseSupervision):
    """One-hot cross-entropy plus the eta-weighted anchor distillation term."""

    kind = "sdl"

    def __init__(self, config: RunConfig):
        super().__init__(config)
        self.queues = AnchorQueues(config.num_classes, config.sdl.queue_size)

    def eta(self, epoch: int, total_epochs: int) -> float:
        return eta_schedule(epoch, total_epochs, self.config.sdl.eta_max)

    def loss(self, logits, labels, features, eta):
        soft = None
        if eta > 0.0 and self.queues.is_warm():
            soft = soft_labels_for_batch(features, self.queues, self.config.sdl.top_k)
        elif eta > 0.0:
            logger.debug("anchor queues not warm yet (sizes %s); distillation skipped", self.queues.sizes())
        return total_loss(logits, labels, soft, eta)

    def observe(self, features, probs, labels):
        self.queues.enqueue(features, probs, labels)


__all__ = [
    "BaseSupervision",
    "LabelSmoothingSupervision",
    "OneHotSupervision",
    "SelfDistillationSupervision",
]
