"""Emotion-anchor self-distillation.

Each class keeps two paired FIFO queues of capacity S: detached video
features v and the softmax probabilities p the model produced for them. For
a new sample, cosine similarity against every stored feature is computed,
the K best per class are kept, and the soft label is their probability
vectors averaged with the similarity scores as weights:

    Y_soft = sum(sigma * p) / sum(sigma)

Training then minimizes CE(logits, Y) + eta * BCE(softmax(logits), Y_soft).
Queue contents are plain arrays and never part of the autodiff graph.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import functional as F
from core.exceptions import ContractError, NumericError
from core.tensor import DiffTensor

logger = logging.getLogger(__name__)

PROB_TOLERANCE = 1e-6


def _as_array(value) -> np.ndarray:
    if isinstance(value, DiffTensor):
        return value.data.copy()
    return np.array(value, copy=True)


class AnchorQueues:
    """Per-class paired feature / probability FIFOs of fixed capacity."""

    def __init__(self, num_classes: int, capacity: int):
        if num_classes < 1 or capacity < 1:
            raise ContractError(f"anchor queues need num_classes >= 1 and capacity >= 1, got {num_classes}, {capacity}")
        self.num_classes = num_classes
        self.capacity = capacity
        self.features: List[Deque[np.ndarray]] = [deque(maxlen=capacity) for _ in range(num_classes)]
        self.probs: List[Deque[np.ndarray]] = [deque(maxlen=capacity) for _ in range(num_classes)]

    def __len__(self) -> int:
        return sum(len(q) for q in self.features)

    def sizes(self) -> List[int]:
        return [len(q) for q in self.features]

    def is_warm(self) -> bool:
        """True once every class holds at least one anchor."""
        return all(len(q) > 0 for q in self.features)

    def enqueue(self, features, probs, labels: Sequence[int]) -> "AnchorQueues":
        """Append detached (v, p) pairs to their class queues, oldest evicted first.

        Args:
            features: (B, D) video features
            probs: (B, C) probability vectors, each summing to 1
            labels: B class indices in [0, C)
        """
        feats = np.atleast_2d(_as_array(features))
        prob_rows = np.atleast_2d(_as_array(probs))
        labels = [int(label) for label in np.asarray(labels).reshape(-1)]
        if not len(feats) == len(prob_rows) == len(labels):
            raise ContractError(
                f"enqueue: {len(feats)} features, {len(prob_rows)} probabilities and {len(labels)} labels"
            )
        for label in labels:
            if not 0 <= label < self.num_classes:
                raise ContractError(f"enqueue: label {label} outside [0, {self.num_classes})")
        sums = prob_rows.sum(axis=-1)
        if np.any(np.abs(sums - 1.0) > PROB_TOLERANCE):
            raise ContractError(f"enqueue: probability rows must sum to 1, got sums {sums.tolist()}")
        for v, p, label in zip(feats, prob_rows, labels):
            self.features[label].append(v.copy())
            self.probs[label].append(p.copy())
        return self

    # ------------------------------------------------------------ checkpoint
    def state(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for c in range(self.num_classes):
            if self.features[c]:
                out[f"queue.{c}.features"] = np.stack(self.features[c])
                out[f"queue.{c}.probs"] = np.stack(self.probs[c])
        return out

    def load_state(self, state: Dict[str, np.ndarray]) -> None:
        for c in range(self.num_classes):
            self.features[c].clear()
            self.probs[c].clear()
            feats = state.get(f"queue.{c}.features")
            if feats is None:
                continue
            for v, p in zip(feats, state[f"queue.{c}.probs"]):
                self.features[c].append(np.array(v, copy=True))
                self.probs[c].append(np.array(p, copy=True))


def similarity_scores(v: np.ndarray, queues: AnchorQueues) -> List[np.ndarray]:
    """Cosine similarity of `v` against every stored anchor, per class."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise NumericError("similarity_scores: query feature has zero norm")
    scores = []
    for queue in queues.features:
        if not queue:
            scores.append(np.zeros(0))
            continue
        anchors = np.stack(queue).astype(np.float64)
        anchor_norms = np.linalg.norm(anchors, axis=1)
        if np.any(anchor_norms == 0.0):
            raise NumericError("similarity_scores: an anchor feature has zero norm")
        scores.append(anchors @ v / (anchor_norms * norm))
    return scores


def top_k_scores(
    alpha: Sequence[np.ndarray], queues: AnchorQueues, k: int
) -> Tuple[List[np.ndarray], List[np.ndarray]]:
    """Per class, the min(K, m) largest scores (descending) and their paired probabilities.

    Ties keep the older anchor (lower queue index) first.
    """
    if k < 1:
        raise ContractError(f"top_k_scores: K must be >= 1, got {k}")
    if all(len(a) == 0 for a in alpha):
        raise ContractError("top_k_scores: every anchor queue is empty")
    sigmas, paired = [], []
    for c, scores in enumerate(alpha):
        scores = np.asarray(scores)
        order = np.argsort(-scores, kind="stable")[:k]
        sigmas.append(scores[order])
        if len(order):
            paired.append(np.stack([queues.probs[c][i] for i in order]))
        else:
            paired.append(np.zeros((0, queues.num_classes)))
    return sigmas, paired


def soft_label(sigmas: Sequence[np.ndarray], paired_probs: Sequence[np.ndarray], num_classes: Optional[int] = None) -> np.ndarray:
    """Similarity-weighted average of anchor probabilities.

    A non-positive weight total falls back to the uniform distribution.
    """
    sigma = np.concatenate([np.ravel(s) for s in sigmas]).astype(np.float64)
    rows = [np.atleast_2d(p) for p in paired_probs if np.size(p)]
    width = num_classes if num_classes is not None else (rows[0].shape[-1] if rows else 1)
    probs = np.concatenate(rows).astype(np.float64) if rows else np.zeros((0, width))
    total = sigma.sum()
    if not total > 0.0:
        logger.debug("soft_label: similarity total %.3g <= 0, using uniform label", total)
        return np.full(width, 1.0 / width)
    return (sigma[:, None] * probs).sum(axis=0) / total


def soft_labels_for_batch(features: np.ndarray, queues: AnchorQueues, k: int) -> np.ndarray:
    """(B, D) features -> (B, C) soft labels."""
    rows = []
    for v in np.atleast_2d(features):
        sigmas, paired = top_k_scores(similarity_scores(v, queues), queues, k)
        rows.append(soft_label(sigmas, paired, queues.num_classes))
    return np.stack(rows)


# ----------------------------------------------------------------------- losses
def _one_hot(labels: np.ndarray, num_classes: int, dtype) -> np.ndarray:
    out = np.zeros((len(labels), num_classes), dtype=dtype)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def soft_cross_entropy(logits: DiffTensor, targets: np.ndarray) -> DiffTensor:
    """Mean over the batch of -sum_c target_c * log softmax(logits)_c."""
    log_probs = F.log_softmax(logits, axis=-1)
    weighted = F.mul(log_probs, F.as_tensor(np.asarray(targets, dtype=logits.dtype)))
    return F.neg(F.mean(F.sum(weighted, axis=-1)))


def cross_entropy(logits: DiffTensor, labels: Sequence[int]) -> DiffTensor:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if np.any(labels < 0) or np.any(labels >= logits.shape[-1]):
        raise ContractError(f"cross_entropy: labels {labels.tolist()} outside [0, {logits.shape[-1]})")
    return soft_cross_entropy(logits, _one_hot(labels, logits.shape[-1], logits.dtype))


def binary_cross_entropy(probs: DiffTensor, targets: np.ndarray) -> DiffTensor:
    """Element-wise BCE against soft targets, averaged over classes then batch.

    Log terms are clamped at -100.
    """
    y = F.as_tensor(np.asarray(targets, dtype=probs.dtype))
    pos = F.mul(y, F.log(probs))
    neg = F.mul(F.sub(1.0, y), F.log(F.sub(1.0, probs)))
    return F.neg(F.mean(F.add(pos, neg)))


@dataclass
class LossBreakdown:
    total: DiffTensor
    ce: float
    bce: float
    eta: float
    distilled: bool


def total_loss(
    logits: DiffTensor,
    labels: Sequence[int],
    soft: Optional[np.ndarray],
    eta: float,
    hard_targets: Optional[np.ndarray] = None,
) -> LossBreakdown:
    """CE(logits, Y) + eta * BCE(softmax(logits), Y_soft).

    The BCE term is left out of the graph when `soft` is None or eta == 0.
    `hard_targets` replaces the one-hot targets of the CE term when given.
    """
    if eta < 0:
        raise ContractError(f"total_loss: eta must be >= 0, got {eta}")
    if hard_targets is None:
        ce = cross_entropy(logits, labels)
    else:
        ce = soft_cross_entropy(logits, hard_targets)
    if soft is None or eta == 0.0:
        return LossBreakdown(total=ce, ce=ce.item(), bce=0.0, eta=float(eta), distilled=False)
    bce = binary_cross_entropy(F.softmax(logits, axis=-1), soft)
    total = F.add(ce, F.mul(bce, float(eta)))
    return LossBreakdown(total=total, ce=ce.item(), bce=bce.item(), eta=float(eta), distilled=True)


def eta_schedule(epoch: int, total_epochs: int, eta_max: float = 1.0) -> float:
    """Linear ramp from 0 at the first epoch to `eta_max` at the last."""
    if total_epochs <= 1:
        return 0.0
    fraction = min(max(epoch, 0), total_epochs - 1) / (total_epochs - 1)
    return eta_max * fraction


__all__ = [
    "AnchorQueues",
    "LossBreakdown",
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
