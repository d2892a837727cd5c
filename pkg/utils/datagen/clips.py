"""Uniform temporal clip sampling."""
from __future__ import annotations

from typing import List

import numpy as np

from core.exceptions import ContractError

CLIP_COUNTS = {"uniform-1": 1, "uniform-2": 2}


def clip_indices(length: int, frames: int, mode: str = "uniform-1") -> List[np.ndarray]:
    """Frame indices of each clip.

    `uniform-1` takes floor(i * L / T) for i < T; `uniform-2` adds a second
    clip shifted by half a stride. When L == T both clips are the full
    sequence.
    """
    if mode not in CLIP_COUNTS:
        raise ContractError(f"unknown clip mode '{mode}' (expected one of {sorted(CLIP_COUNTS)})")
    if length < 1 or frames < 1:
        raise ContractError(f"clip sampling needs length >= 1 and frames >= 1, got {length}, {frames}")
    stride = length / frames
    base = np.arange(frames) * stride
    clips = [np.floor(base).astype(np.int64)]
    if CLIP_COUNTS[mode] == 2:
        clips.append(np.minimum(np.floor(base + stride / 2.0).astype(np.int64), length - 1))
    return clips


def sample_clip(sequence: np.ndarray, frames: int, mode: str = "uniform-1") -> List[np.ndarray]:
    """Clips of `frames` evenly spaced frames taken along axis 0 of `sequence`."""
    return [sequence[idx] for idx in clip_indices(len(sequence), frames, mode)]


__all__ = ["CLIP_COUNTS", "clip_indices", "sample_clip"]
