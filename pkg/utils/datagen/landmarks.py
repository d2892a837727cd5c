"""Landmark-aware feature providers.

A provider turns a sample into a (L, C', H', W') array: J keypoint heatmaps
followed by one low-pass appearance channel. The synthetic provider renders
the heatmaps from the sample's keypoints; the file provider loads a
precomputed array named by the dataset manifest.
"""
from __future__ import annotations

import functools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from core.config import DataConfig
from core.exceptions import ContractError, DataFormatError
from utils.tensor_io import read_tensor_file

from .synthetic import SyntheticSample, render_blobs

logger = logging.getLogger(__name__)

CACHE_SIZE = 256


@dataclass(frozen=True)
class _ClipKey:
    """Hashes and compares on clip_id only; carries the sample to the loader."""

    clip_id: str
    sample: SyntheticSample = field(compare=False, hash=False, repr=False)


class LandmarkProvider:
    """Maps a sample to its landmark features (L, C', H', W').

    Calls go through a per-provider LRU cache keyed by clip_id holding at
    most ``cache_size`` arrays; ``cache_size=0`` disables it. Callers must
    not write into the returned array.
    """

    def __init__(self, cfg: DataConfig, cache_size: int = CACHE_SIZE):
        self.cfg = cfg
        self.cache_size = cache_size
        self._cached = functools.lru_cache(maxsize=cache_size)(self._load) if cache_size > 0 else None

    @property
    def channels(self) -> int:
        return self.cfg.landmark_channels

    def features(self, sample: SyntheticSample) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement features()")

    def _load(self, key: _ClipKey) -> np.ndarray:
        return self.features(key.sample)

    def cache_info(self):
        return self._cached.cache_info() if self._cached is not None else None

    def cache_clear(self) -> None:
        if self._cached is not None:
            self._cached.cache_clear()

    def __call__(self, sample: SyntheticSample) -> np.ndarray:
        if self._cached is None:
            return self.features(sample)
        return self._cached(_ClipKey(sample.clip_id, sample))


class SyntheticLandmarkProvider(LandmarkProvider):
    """Gaussian heatmaps around each keypoint plus a blurred grey-level channel."""

    def heatmaps(self, keypoints: np.ndarray) -> np.ndarray:
        """(L, J, 2) keypoints in image pixels -> (L, J, H', W') in [0, 1]."""
        keypoints = np.asarray(keypoints, dtype=np.float64)
        if keypoints.ndim != 3 or keypoints.shape[1] < 1 or keypoints.shape[2] != 2:
            raise ContractError(f"keypoints must be (L, J >= 1, 2), got {keypoints.shape}")
        scale = self.cfg.landmark_size / self.cfg.image_size
        return render_blobs(keypoints, self.cfg.landmark_size, self.cfg.heatmap_sigma, scale=scale)

    def low_pass(self, frames: np.ndarray) -> np.ndarray:
        """(L, C, H, W) -> (L, H', W') blurred channel mean, rescaled to [0, 1]."""
        grey = frames.mean(axis=1)
        blurred = gaussian_filter(grey, sigma=(0.0, 2.0, 2.0), mode="wrap")
        step = self.cfg.image_size // self.cfg.landmark_size
        if step > 1:
            blurred = blurred[:, ::step, ::step]
        elif self.cfg.landmark_size != self.cfg.image_size:
            reps = self.cfg.landmark_size // self.cfg.image_size
            blurred = blurred.repeat(reps, axis=1).repeat(reps, axis=2)
        peak = blurred.max()
        return blurred / peak if peak > 0 else blurred

    def features(self, sample: SyntheticSample) -> np.ndarray:
        if sample.keypoints is None:
            raise ContractError(f"sample {sample.clip_id} carries no keypoints")
        maps = self.heatmaps(sample.keypoints)
        if maps.shape[1] != self.cfg.keypoints:
            raise ContractError(f"sample {sample.clip_id} has {maps.shape[1]} keypoints, expected {self.cfg.keypoints}")
        low = self.low_pass(sample.frames)[:, None]
        return np.concatenate([maps, low], axis=1)


class FileLandmarkProvider(LandmarkProvider):
    """Loads landmark features from tensor files referenced by each sample."""

    def __init__(self, cfg: DataConfig, root: Optional[Path] = None, cache_size: int = CACHE_SIZE):
        super().__init__(cfg, cache_size=cache_size)
        self.root = Path(root) if root is not None else None

    def features(self, sample: SyntheticSample) -> np.ndarray:
        if not sample.landmarks_path:
            raise DataFormatError(f"sample {sample.clip_id} has no landmarks path")
        path = Path(sample.landmarks_path)
        if self.root is not None and not path.is_absolute():
            path = self.root / path
        features = read_tensor_file(path)
        expected = (sample.length, self.channels, self.cfg.landmark_size, self.cfg.landmark_size)
        if features.shape != expected:
            raise DataFormatError(f"{path}: landmark features {features.shape}, expected {expected}")
        return features


def landmark_provider(sample: SyntheticSample, cfg: DataConfig) -> np.ndarray:
    """Synthetic landmark features for one sample."""
    return SyntheticLandmarkProvider(cfg).features(sample)


__all__ = [
    "FileLandmarkProvider",
    "LandmarkProvider",
    "SyntheticLandmarkProvider",
    "landmark_provider",
]
