"""Synthetic video clips with appearance-only and motion-only classes.

Every clip shows a cluster of J keypoints rendered as Gaussian blobs on a
periodic (torus) canvas.

Appearance classes: the cluster sits still and is drawn in a class-specific
color channel, so one frame is enough to tell them apart.

Motion classes: the cluster is drawn in channel 0 and drifts one of up, down,
left or right by `speed` pixels per frame. Its brightness ramps from 0.4 to
1.0 over the sequence, the same ramp for every direction, so the order of a
set of frames is recoverable without a temporal position. Because the start
position is uniform on the torus, the distribution of any single frame is
the same for all four directions; only the relation between frames reveals
the label.

Labels are 0-based: appearance classes first, then motion classes in the
order of MOTION_DIRECTIONS.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from core.config import DataConfig
from core.exceptions import ContractError

logger = logging.getLogger(__name__)

# (dx, dy) per frame in pixel units; y grows downwards.
MOTION_DIRECTIONS = {
    "up": (0.0, -1.0),
    "down": (0.0, 1.0),
    "left": (-1.0, 0.0),
    "right": (1.0, 0.0),
}
SPLIT_CODES = {"train": 0, "test": 1}
BLOB_SIGMA = 1.2
CLUSTER_RADIUS = 5.0
RAMP_START = 0.4
APPEARANCE_INTENSITY = 0.7


@dataclass
class SyntheticSample:
    """One video: frames (L, C, H, W) in [0, 1], keypoints (L, J, 2) as (x, y)."""

    frames: np.ndarray
    label: int
    clip_id: str
    keypoints: Optional[np.ndarray] = None
    landmarks_path: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return int(self.frames.shape[0])


def class_names(cfg: DataConfig) -> List[str]:
    appearance = [f"appearance_{i}" for i in range(cfg.appearance_classes)]
    motion = list(MOTION_DIRECTIONS)[: cfg.motion_classes]
    return appearance + motion


def torus_offsets(coords: np.ndarray, centers: np.ndarray, size: int) -> np.ndarray:
    """Signed shortest displacement on a ring of `size` pixels."""
    return (coords - centers + size / 2.0) % size - size / 2.0


def render_blobs(points: np.ndarray, size: int, sigma: float, scale: float = 1.0) -> np.ndarray:
    """Per-point Gaussian maps with peak value 1 at the (continuous) point location.

    Args:
        points: (..., J, 2) coordinates (x, y) in pixels of the `size` canvas
        scale: factor applied to the coordinates before rendering

    Returns:
        (..., J, size, size)
    """
    grid = np.arange(size, dtype=np.float64)
    px = points[..., 0, None] * scale
    py = points[..., 1, None] * scale
    dx = torus_offsets(grid, px, size)  # (..., J, size) over columns
    dy = torus_offsets(grid, py, size)  # over rows
    gx = np.exp(-0.5 * (dx / sigma) ** 2)
    gy = np.exp(-0.5 * (dy / sigma) ** 2)
    return gy[..., :, None] * gx[..., None, :]


def intensity_ramp(length: int) -> np.ndarray:
    if length == 1:
        return np.array([1.0])
    return RAMP_START + (1.0 - RAMP_START) * np.arange(length) / (length - 1)


def _keypoint_track(
    rng: np.random.Generator, cfg: DataConfig, velocity: np.ndarray
) -> np.ndarray:
    size = cfg.image_size
    center = rng.uniform(0.0, size, size=2)
    template = rng.uniform(-CLUSTER_RADIUS, CLUSTER_RADIUS, size=(cfg.keypoints, 2))
    steps = np.arange(cfg.sequence_length, dtype=np.float64)[:, None] * velocity[None, :] * cfg.speed
    track = center[None, None, :] + template[None, :, :] + steps[:, None, :]
    return track % size


def _occlude(rng: np.random.Generator, frames: np.ndarray) -> None:
    """Blank one random rectangle per frame in place."""
    size = frames.shape[-1]
    for frame in frames:
        h, w = rng.integers(size // 4, size // 2 + 1, size=2)
        top, left = rng.integers(0, size - h + 1), rng.integers(0, size - w + 1)
        frame[:, top:top + h, left:left + w] = 0.0


def generate_sample(cfg: DataConfig, seed: int, split: str, index: int) -> SyntheticSample:
    """Sample `index` of a split; a pure function of (cfg, seed, split, index)."""
    if split not in SPLIT_CODES:
        raise ContractError(f"unknown split '{split}'")
    rng = np.random.default_rng([int(seed), SPLIT_CODES[split], int(index)])
    label = index % cfg.num_classes
    length, size = cfg.sequence_length, cfg.image_size

    if label < cfg.appearance_classes:
        velocity = np.zeros(2)
        channel = 1 + label % max(cfg.channels - 1, 1) if cfg.channels > 1 else 0
        intensity = np.full(length, APPEARANCE_INTENSITY)
    else:
        direction = list(MOTION_DIRECTIONS)[label - cfg.appearance_classes]
        velocity = np.asarray(MOTION_DIRECTIONS[direction])
        channel = 0
        intensity = intensity_ramp(length)

    keypoints = _keypoint_track(rng, cfg, velocity)
    blobs = render_blobs(keypoints, size, BLOB_SIGMA).sum(axis=1)  # (L, H, W)
    frames = np.zeros((length, cfg.channels, size, size))
    frames[:, channel] = intensity[:, None, None] * blobs

    if cfg.occlusion:
        _occlude(rng, frames)
        noise_std = cfg.occlusion_noise_std
    else:
        noise_std = cfg.noise_std
    frames += rng.normal(0.0, noise_std, size=frames.shape)
    np.clip(frames, 0.0, 1.0, out=frames)

    return SyntheticSample(
        frames=frames,
        label=int(label),
        clip_id=f"{split}-{index:05d}",
        keypoints=keypoints,
        meta={"channel": int(channel)},
    )


def generate_dataset(cfg: DataConfig, seed: int, split: str = "train", count: Optional[int] = None) -> List[SyntheticSample]:
    """Balanced list of samples; class = index mod class count."""
    if cfg.motion_classes > len(MOTION_DIRECTIONS):
        raise ContractError(f"at most {len(MOTION_DIRECTIONS)} motion classes are available")
    if count is None:
        count = cfg.num_train if split == "train" else cfg.num_test
    samples = [generate_sample(cfg, seed, split, index) for index in range(count)]
    logger.info("Generated %d %s samples (%d classes, seed %d)", len(samples), split, cfg.num_classes, seed)
    return samples


__all__ = [
    "MOTION_DIRECTIONS",
    "SyntheticSample",
    "class_names",
    "generate_dataset",
    "generate_sample",
    "intensity_ramp",
    "render_blobs",
    "torus_offsets",
]
