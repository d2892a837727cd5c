"""Training objectives: cross-entropy variants and anchor self-distillation."""

from .sdl import (
    AnchorQueues,
    LossBreakdown,
    binary_cross_entropy,
    cross_entropy,
    eta_schedule,
    similarity_scores,
    soft_cross_entropy,
    soft_label,
    soft_labels_for_batch,
    top_k_scores,
    total_loss,
)
from .supervision import (
    BaseSupervision,
    LabelSmoothingSupervision,
    OneHotSupervision,
    SelfDistillationSupervision,
)

__all__ = [
    "AnchorQueues",
    "BaseSupervision",
    "LabelSmoothingSupervision",
    "LossBreakdown",
    "OneHotSupervision",
    "SelfDistillationSupervision",
    "binary_cross_entropy",
    "cross_entropy",
    "eta_schedule",
    "similarity_scores",
    "soft_cross_entropy",
    "soft_label",
    "soft_labels_for_batch",
    "top_k_scores",
    "total_loss",
]
