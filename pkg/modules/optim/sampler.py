"""Per-epoch index orders.

Each epoch draws from its own generator seeded with (seed, epoch), so an
epoch's order depends only on those two numbers and a resumed run needs no
saved generator state.
"""
from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from core.exceptions import ContractError


def epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(epoch)])


def shuffled_indices(size: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(size)


def oversample_indices(
    labels: Sequence[int],
    rng: Union[int, np.random.Generator],
    length: Optional[int] = None,
) -> np.ndarray:
    """Draw with replacement so every present class is equally likely.

    Sample weights are inverse class frequencies; the epoch length defaults
    to the dataset size.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if labels.size == 0:
        raise ContractError("oversample_indices: empty label list")
    _, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    weights = 1.0 / counts[inverse]
    weights /= weights.sum()
    size = labels.size if length is None else int(length)
    return rng.choice(labels.size, size=size, replace=True, p=weights)


__all__ = ["epoch_rng", "oversample_indices", "shuffled_indices"]
