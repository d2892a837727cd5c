"""Named parameter table with per-name tunable flags.

Names are dotted paths such as ``backbone.layers.0.attn.wq`` or
``mcp.1.g3.weight``; insertion order is the canonical order used by the
optimizer, checkpoints and gradient checks.
"""
from __future__ import annotations

import hashlib
import logging
from collections import OrderedDict
from typing import Callable, Dict, Iterable, Iterator, List, Literal, Optional, Tuple

import numpy as np

from .exceptions import ConfigurationError
from .tensor import DiffTensor

logger = logging.getLogger(__name__)

CountFilter = Literal["all", "tunable", "frozen"]


class ParameterStore:
    """Ordered map name -> DiffTensor plus a tunable flag per name."""

    def __init__(self, dtype: np.dtype = np.float64) -> None:
        self.dtype = np.dtype(dtype)
        self._tensors: "OrderedDict[str, DiffTensor]" = OrderedDict()
        self._tunable: Dict[str, bool] = {}

    # ------------------------------------------------------------- building
    def add(self, name: str, data: np.ndarray, tunable: bool = True) -> DiffTensor:
        if name in self._tensors:
            raise ConfigurationError(f"Parameter '{name}' registered twice")
        tensor = DiffTensor(np.array(data, dtype=self.dtype), requires_grad=tunable, name=name)
        self._tensors[name] = tensor
        self._tunable[name] = bool(tunable)
        return tensor

    def __getitem__(self, name: str) -> DiffTensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise ConfigurationError(f"Unknown parameter name '{name}'") from None

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self, prefix: str = "") -> List[str]:
        return [name for name in self._tensors if name.startswith(prefix)]

    def items(self) -> Iterable[Tuple[str, DiffTensor]]:
        return self._tensors.items()

    # -------------------------------------------------------------- freezing
    def is_tunable(self, name: str) -> bool:
        self[name]
        return self._tunable[name]

    def set_tunable(self, name: str, tunable: bool) -> None:
        tensor = self[name]
        self._tunable[name] = bool(tunable)
        tensor.requires_grad = bool(tunable)
        tensor.grad = np.zeros_like(tensor.data) if tunable else None

    def set_tunable_where(self, predicate: Callable[[str], bool]) -> None:
        for name in self._tensors:
            self.set_tunable(name, predicate(name))

    def tunable_names(self) -> List[str]:
        return [name for name, flag in self._tunable.items() if flag]

    def frozen_names(self) -> List[str]:
        return [name for name, flag in self._tunable.items() if not flag]

    def zero_grad(self) -> None:
        for name in self.tunable_names():
            self._tensors[name].zero_grad()

    # -------------------------------------------------------------- counting
    def count(self, which: CountFilter = "all") -> int:
        if which == "all":
            names: Iterable[str] = self._tensors
        elif which == "tunable":
            names = self.tunable_names()
        elif which == "frozen":
            names = self.frozen_names()
        else:
            raise ConfigurationError(f"Unknown parameter filter '{which}'")
        return int(sum(self._tensors[name].size for name in names))

    def tunable_fraction(self) -> float:
        total = self.count("all")
        return self.count("tunable") / total if total else 0.0

    # ------------------------------------------------------------ snapshots
    def state(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((name, tensor.data.copy()) for name, tensor in self._tensors.items())

    def load_state(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        missing = [name for name in self._tensors if name not in state]
        unknown = [name for name in state if name not in self._tensors]
        if strict and (missing or unknown):
            raise ConfigurationError(f"State mismatch: missing={missing} unknown={unknown}")
        for name, value in state.items():
            if name not in self._tensors:
                continue
            tensor = self._tensors[name]
            if tuple(value.shape) != tensor.shape:
                raise ConfigurationError(
                    f"Parameter '{name}' has shape {tensor.shape}, state holds {tuple(value.shape)}"
                )
            tensor.data[...] = value

    def checksums(self, names: Optional[Iterable[str]] = None) -> Dict[str, str]:
        names = list(names) if names is not None else list(self._tensors)
        return {
            name: hashlib.sha256(np.ascontiguousarray(self[name].data).tobytes()).hexdigest()
            for name in names
        }

    def astype(self, dtype: np.dtype) -> "ParameterStore":
        clone = ParameterStore(dtype)
        for name, tensor in self._tensors.items():
            clone.add(name, tensor.data, tunable=self._tunable[name])
        return clone


def scaled_uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)


def trunc_normal(rng: np.random.Generator, shape: Tuple[int, ...], std: float = 0.02) -> np.ndarray:
    values = rng.normal(0.0, std, size=shape)
    return np.clip(values, -2.0 * std, 2.0 * std)


__all__ = ["CountFilter", "ParameterStore", "scaled_uniform", "trunc_normal"]
