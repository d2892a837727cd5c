"""Optimizer, learning-rate schedules and epoch samplers."""

from .adamw import AdamW, AdamWState, adamw_step
from .sampler import epoch_rng, oversample_indices, shuffled_indices
from .schedules import cosine_lr, scaled_lr

__all__ = [
    "AdamW",
    "AdamWState",
    "adamw_step",
    "cosine_lr",
    "epoch_rng",
    "oversample_indices",
    "scaled_lr",
    "shuffled_indices",
]
