"""AdamW with decoupled weight decay.

Update order per tunable parameter (step t, rate lr):

    p <- p * (1 - lr * wd)            (skipped for parameters with ndim <= 1)
    m <- b1 * m + (1 - b1) * g
    v <- b2 * v + (1 - b2) * g^2
    p <- p - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)

Frozen names are never read or written, even if they carry a gradient.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from core.exceptions import CheckpointError, DimensionError
from core.parameters import ParameterStore

logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    step: int = 0
    exp_avg: Dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: Dict[str, np.ndarray] = field(default_factory=dict)

    def state_dict(self) -> Dict[str, np.ndarray]:
        out = {"optim.step": np.array(self.step, dtype=np.int64)}
        for name, value in self.exp_avg.items():
            out[f"optim.exp_avg.{name}"] = value.copy()
        for name, value in self.exp_avg_sq.items():
            out[f"optim.exp_avg_sq.{name}"] = value.copy()
        return out

    @classmethod
    def from_state_dict(cls, raw: Dict[str, np.ndarray]) -> "AdamWState":
        if "optim.step" not in raw:
            raise CheckpointError("optimizer state is missing 'optim.step'")
        state = cls(step=int(raw["optim.step"]))
        for key, value in raw.items():
            if key.startswith("optim.exp_avg_sq."):
                state.exp_avg_sq[key[len("optim.exp_avg_sq."):]] = np.array(value, copy=True)
            elif key.startswith("optim.exp_avg."):
                state.exp_avg[key[len("optim.exp_avg."):]] = np.array(value, copy=True)
        return state


def decays(name: str, value: np.ndarray) -> bool:
    """Weight decay applies to matrices only; gains, biases and lambda are exempt."""
    return value.ndim > 1


def adamw_step(
    params: ParameterStore,
    state: AdamWState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.95,
    eps: float = 1e-8,
    weight_decay: float = 0.05,
) -> AdamWState:
    state.step += 1
    t = state.step
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    for name in params.tunable_names():
        tensor = params[name]
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if grad.shape != tensor.shape:
            raise DimensionError(f"gradient {grad.shape} does not match parameter '{name}' {tensor.shape}")
        m = state.exp_avg.setdefault(name, np.zeros_like(tensor.data))
        v = state.exp_avg_sq.setdefault(name, np.zeros_like(tensor.data))
        if weight_decay and decays(name, tensor.data):
            tensor.data *= 1.0 - lr * weight_decay
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        denom = np.sqrt(v / correction2) + eps
        tensor.data -= lr * (m / correction1) / denom
    return state


class AdamW:
    """Optimizer bound to the tunable entries of a ParameterStore."""

    def __init__(
        self,
        params: ParameterStore,
        betas=(0.9, 0.95),
        eps: float = 1e-8,
        weight_decay: float = 0.05,
        state: AdamWState = None,
    ):
        self.params = params
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = state if state is not None else AdamWState()

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self, lr: float) -> None:
        adamw_step(self.params, self.state, lr, self.beta1, self.beta2, self.eps, self.weight_decay)


__all__ = ["AdamW", "AdamWState", "adamw_step", "decays"]
