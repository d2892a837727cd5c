"""Learning-rate helpers."""
from __future__ import annotations

import math


def scaled_lr(lr_base: float, batch_size: int, reference_batch: int = 8) -> float:
    """Linear batch-size scaling: lr_base * N_bs / 8."""
    return lr_base * batch_size / reference_batch


def cosine_lr(step: int, total_steps: int, lr: float) -> float:
    """Cosine annealing from `lr` at step 0 to 0 at `total_steps`, no warmup."""
    if total_steps <= 0:
        return lr
    progress = min(max(step, 0), total_steps) / total_steps
    return lr * 0.5 * (1.0 + math.cos(math.pi * progress))


__all__ = ["cosine_lr", "scaled_lr"]
