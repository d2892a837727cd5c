"""Clip datasets and the JSON-lines manifest written by `s2d gen-data`.

Manifest records, one per line:

    {"clip_id": ..., "label": ..., "split": ..., "frames_path": ..., "landmarks_path": ...}

Paths are relative to the manifest's directory.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from core.config import DataConfig, RunConfig
from core.exceptions import DataFormatError
from utils.tensor_io import read_tensor_file, write_tensor_file

from .clips import CLIP_COUNTS, clip_indices
from .landmarks import FileLandmarkProvider, LandmarkProvider, SyntheticLandmarkProvider
from .synthetic import SyntheticSample, generate_dataset

logger = logging.getLogger(__name__)

MANIFEST_KEYS = ("clip_id", "label", "split", "frames_path", "landmarks_path")


@dataclass
class Batch:
    frames: np.ndarray  # (B, T, C, H, W)
    landmarks: np.ndarray  # (B, T, C', H', W')
    labels: np.ndarray  # (B,)
    clip_ids: List[str]


class ClipDataset:
    """Samples plus a landmark provider, served as fixed-length clips.

    Landmark features are computed on access, so only the frame sequences
    stay in memory.
    """

    def __init__(
        self,
        samples: Sequence[SyntheticSample],
        provider: LandmarkProvider,
        frames: int,
        clip_mode: str = "uniform-1",
        dtype: np.dtype = np.float64,
    ):
        self.samples = list(samples)
        self.provider = provider
        self.frames = frames
        self.clip_mode = clip_mode
        self.dtype = np.dtype(dtype)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[SyntheticSample]:
        return iter(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def num_clips(self) -> int:
        return CLIP_COUNTS[self.clip_mode]

    def with_clip_mode(self, clip_mode: str) -> "ClipDataset":
        return ClipDataset(self.samples, self.provider, self.frames, clip_mode, self.dtype)

    def clip(self, index: int, clip: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """(frames (T, C, H, W), landmarks (T, C', H', W')) of one clip of one sample."""
        sample = self.samples[index]
        idx = clip_indices(sample.length, self.frames, self.clip_mode)[clip]
        landmarks = self.provider(sample)
        return sample.frames[idx].astype(self.dtype), landmarks[idx].astype(self.dtype)

    def batch(self, indices: Sequence[int], clip: int = 0) -> Batch:
        pairs = [self.clip(int(i), clip) for i in indices]
        return Batch(
            frames=np.stack([f for f, _ in pairs]),
            landmarks=np.stack([a for _, a in pairs]),
            labels=np.array([self.samples[int(i)].label for i in indices], dtype=np.int64),
            clip_ids=[self.samples[int(i)].clip_id for i in indices],
        )

    def batches(self, order: Sequence[int], batch_size: int, clip: int = 0) -> Iterator[Batch]:
        order = list(order)
        for start in range(0, len(order), batch_size):
            yield self.batch(order[start:start + batch_size], clip)


# ------------------------------------------------------------------- manifest
def write_manifest(
    out_dir: Path,
    splits: Dict[str, Sequence[SyntheticSample]],
    provider: LandmarkProvider,
) -> Path:
    """Write frames / landmarks tensor files and a manifest.jsonl under `out_dir`."""
    out_dir = Path(out_dir)
    manifest = out_dir / "manifest.jsonl"
    out_dir.mkdir(parents=True, exist_ok=True)
    with manifest.open("w", encoding="utf-8") as handle:
        for split, samples in splits.items():
            for sample in samples:
                frames_rel = Path(split) / f"{sample.clip_id}.frames.s2dt"
                landmarks_rel = Path(split) / f"{sample.clip_id}.landmarks.s2dt"
                write_tensor_file(out_dir / frames_rel, sample.frames.astype(np.float32))
                write_tensor_file(out_dir / landmarks_rel, provider(sample).astype(np.float32))
                record = {
                    "clip_id": sample.clip_id,
                    "label": int(sample.label),
                    "split": split,
                    "frames_path": frames_rel.as_posix(),
                    "landmarks_path": landmarks_rel.as_posix(),
                }
                handle.write(json.dumps(record) + "\n")
    logger.info("Wrote manifest %s", manifest)
    return manifest


def read_manifest(path: Path) -> List[Dict[str, object]]:
    path = Path(path)
    records = []
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read manifest {path}: {exc}") from exc
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}:{number}: invalid JSON ({exc})") from exc
        missing = [key for key in MANIFEST_KEYS if key not in record]
        if missing:
            raise DataFormatError(f"{path}:{number}: record lacks {missing}")
        records.append(record)
    return records


def samples_from_manifest(path: Path, split: str) -> List[SyntheticSample]:
    root = Path(path).parent
    samples = []
    for record in read_manifest(path):
        if record["split"] != split:
            continue
        samples.append(
            SyntheticSample(
                frames=read_tensor_file(root / str(record["frames_path"])),
                label=int(record["label"]),
                clip_id=str(record["clip_id"]),
                landmarks_path=str(record["landmarks_path"]),
            )
        )
    return samples


def load_datasets(config: RunConfig, seed: Optional[int] = None) -> Tuple[ClipDataset, ClipDataset]:
    """(train, test) datasets, from the manifest when one is configured.

    The train set always serves one uniform clip; the test set uses the
    configured clip mode.
    """
    data: DataConfig = config.data
    seed = config.seed if seed is None else seed
    if data.manifest:
        manifest = Path(data.manifest)
        provider: LandmarkProvider = FileLandmarkProvider(data, root=manifest.parent)
        train = samples_from_manifest(manifest, "train")
        test = samples_from_manifest(manifest, "test")
        logger.info("Loaded %d train / %d test samples from %s", len(train), len(test), manifest)
    else:
        provider = SyntheticLandmarkProvider(data)
        train = generate_dataset(data, seed, "train")
        test = generate_dataset(data, seed, "test")
    dtype = config.np_dtype
    return (
        ClipDataset(train, provider, data.frames, "uniform-1", dtype),
        ClipDataset(test, provider, data.frames, data.clip_mode, dtype),
    )


__all__ = [
    "Batch",
    "ClipDataset",
    "load_datasets",
    "read_manifest",
    "samples_from_manifest",
    "write_manifest",
]
