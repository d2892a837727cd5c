"""Confusion matrices, UAR / WAR, clip-averaged evaluation and raw dumps.

WAR is overall accuracy (trace / total). UAR is the mean recall over the
classes that have at least one sample; empty classes are left out with a
warning. Predictions are the argmax of clip-averaged logits, with ties
going to the lower class index.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from utils.datagen.dataset import ClipDataset
from utils.tensor_io import write_tensor_file

from .exceptions import ContractError
from .model import S2DModel
from .tensor import no_grad

logger = logging.getLogger(__name__)


class ConfusionMatrix:
    """C x C counts; rows are true classes, columns predictions."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ContractError(f"confusion matrix needs at least one class, got {num_classes}")
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    @classmethod
    def from_predictions(cls, y_true: Sequence[int], y_pred: Sequence[int], num_classes: int) -> "ConfusionMatrix":
        cm = cls(num_classes)
        cm.add(y_true, y_pred)
        return cm

    @classmethod
    def from_counts(cls, counts) -> "ConfusionMatrix":
        counts = np.asarray(counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or np.any(counts < 0):
            raise ContractError(f"counts must be a non-negative square matrix, got shape {counts.shape}")
        cm = cls(counts.shape[0])
        cm.counts[...] = counts
        return cm

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def add(self, y_true: Sequence[int], y_pred: Sequence[int]) -> None:
        y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
        y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
        if y_true.shape != y_pred.shape:
            raise ContractError(f"{y_true.size} labels but {y_pred.size} predictions")
        k = self.num_classes
        if np.any((y_true < 0) | (y_true >= k) | (y_pred < 0) | (y_pred >= k)):
            raise ContractError(f"labels or predictions outside [0, {k})")
        np.add.at(self.counts, (y_true, y_pred), 1)


@dataclass
class Metrics:
    war: float
    uar: float
    recalls: List[Optional[float]]
    excluded: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, object]:
        return {"war": self.war, "uar": self.uar, "recalls": self.recalls, "excluded": self.excluded}


def compute_metrics(cm: ConfusionMatrix) -> Metrics:
    total = cm.total
    if total == 0:
        raise ContractError("compute_metrics: confusion matrix is empty")
    support = cm.counts.sum(axis=1)
    diag = np.diag(cm.counts)
    recalls: List[Optional[float]] = []
    excluded = []
    for c in range(cm.num_classes):
        if support[c] == 0:
            recalls.append(None)
            excluded.append(c)
        else:
            recalls.append(float(diag[c] / support[c]))
    if excluded:
        logger.warning("Classes %s have no samples and are left out of UAR", excluded)
    present = [r for r in recalls if r is not None]
    return Metrics(
        war=float(diag.sum() / total),
        uar=float(np.mean(present)),
        recalls=recalls,
        excluded=excluded,
    )


def predict_labels(logits: np.ndarray) -> np.ndarray:
    """Argmax per row; the first (lowest) index wins ties."""
    return np.argmax(np.asarray(logits), axis=-1)


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    metrics: Metrics
    logits: np.ndarray
    labels: np.ndarray
    clip_ids: List[str]

    @property
    def predictions(self) -> np.ndarray:
        return predict_labels(self.logits)

    def to_dict(self) -> Dict[str, object]:
        return {
            "samples": int(len(self.labels)),
            "confusion": self.confusion.counts.tolist(),
            **self.metrics.to_dict(),
        }


def _batch_logits(model: S2DModel, batch, mode: str) -> np.ndarray:
    if mode == "sfer":
        return model.forward_frames(batch.frames, batch.landmarks).logits.data
    return model.forward(batch.frames, batch.landmarks, mode=mode).logits.data


def clip_logits(model: S2DModel, dataset: ClipDataset, mode: Optional[str] = None, batch_size: int = 16) -> np.ndarray:
    """(M, K) logits averaged over the dataset's clips, in dataset order."""
    mode = mode or model.config.mode
    order = np.arange(len(dataset))
    per_clip = []
    with no_grad():
        for clip in range(dataset.num_clips):
            chunks = [_batch_logits(model, batch, mode) for batch in dataset.batches(order, batch_size, clip)]
            per_clip.append(np.concatenate(chunks))
    return np.mean(per_clip, axis=0)


def evaluate(
    model: S2DModel,
    dataset: ClipDataset,
    clip_mode: Optional[str] = None,
    mode: Optional[str] = None,
    batch_size: int = 16,
) -> EvaluationReport:
    if clip_mode is not None and clip_mode != dataset.clip_mode:
        dataset = dataset.with_clip_mode(clip_mode)
    logits = clip_logits(model, dataset, mode, batch_size)
    labels = dataset.labels
    cm = ConfusionMatrix.from_predictions(labels, predict_labels(logits), model.config.num_classes)
    metrics = compute_metrics(cm)
    logger.debug("Evaluated %d samples (%s): WAR %.4f UAR %.4f", len(labels), dataset.clip_mode, metrics.war, metrics.uar)
    return EvaluationReport(cm, metrics, logits, labels, [s.clip_id for s in dataset])


def dump_features(
    model: S2DModel,
    dataset: ClipDataset,
    out_dir: Path,
    mode: Optional[str] = None,
    batch_size: int = 16,
) -> Dict[str, Path]:
    """Write video features (M, D), last-layer attention (M, heads, N+1, N+1) and labels."""
    mode = mode or model.config.mode
    feats, attn = [], []
    with no_grad():
        for batch in dataset.batches(np.arange(len(dataset)), batch_size):
            if mode == "sfer":
                b, t = batch.frames.shape[:2]
                out = model.forward(
                    batch.frames.reshape((b * t, 1) + batch.frames.shape[2:]),
                    batch.landmarks.reshape((b * t, 1) + batch.landmarks.shape[2:]),
                    mode="sfer",
                    return_attention=True,
                )
                feats.append(out.features.data.reshape((b, t, -1)).mean(axis=1))
                attn.append(out.attention.reshape((b, t) + out.attention.shape[1:]).mean(axis=1))
            else:
                out = model.forward(batch.frames, batch.landmarks, mode=mode, return_attention=True)
                feats.append(out.features.data)
                attn.append(out.attention)
    out_dir = Path(out_dir)
    paths = {
        "features": write_tensor_file(out_dir / "features.s2dt", np.concatenate(feats)),
        "attention": write_tensor_file(out_dir / "attention.s2dt", np.concatenate(attn)),
        "labels": write_tensor_file(out_dir / "labels.s2dt", dataset.labels.astype(np.float64)),
    }
    logger.info("Dumped features and attention for %d samples to %s", len(dataset), out_dir)
    return paths


__all__ = [
    "ConfusionMatrix",
    "EvaluationReport",
    "Metrics",
    "clip_logits",
    "compute_metrics",
    "dump_features",
    "evaluate",
    "predict_labels",
]
