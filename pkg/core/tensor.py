"""Reverse-mode automatic differentiation over dense numpy arrays.

A `DiffTensor` is a node in a computation graph: it owns a value, a gradient
accumulator and, for op outputs, the parents plus the local-gradient rule that
maps the upstream gradient to one gradient per parent. `backward` traces the
graph behind a scalar loss and replays the rules in reverse topological order.

Node ids come from a process-wide counter, so a child always has a larger id
than any of its parents and sorting by id is a topological order.

Gradient semantics: leaves accumulate (``+=``) across backward calls until
`zero_grad` is called; interior nodes get their upstream gradient of the most
recent pass overwritten.
"""
from __future__ import annotations

import contextlib
import itertools
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ContractError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_node_ids = itertools.count()
_grad_state = threading.local()


def grad_enabled() -> bool:
    """Return False inside a `no_grad()` block on the current thread."""
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Build values only: ops inside the block record no graph edges."""
    previous = grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


def _as_float_array(data: ArrayLike, dtype: Optional[np.dtype]) -> np.ndarray:
    if dtype is not None:
        return np.asarray(data, dtype=dtype)
    arr = np.asarray(data)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return arr


class DiffTensor:
    """Value + gradient accumulator node in a reverse-mode graph."""

    __slots__ = ("data", "grad", "requires_grad", "node_id", "op", "name", "_parents", "_backward_fn")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        *,
        dtype: Optional[np.dtype] = None,
        parents: Tuple["DiffTensor", ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        op: str = "leaf",
        name: Optional[str] = None,
    ) -> None:
        self.data: np.ndarray = _as_float_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self.op = op
        self.name = name
        self._parents = parents
        self._backward_fn = backward_fn
        self.grad: Optional[np.ndarray] = None
        if self.requires_grad and backward_fn is None:
            self.grad = np.zeros_like(self.data)

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward_fn is None

    @property
    def parents(self) -> Tuple["DiffTensor", ...]:
        return self._parents

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"DiffTensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    # ------------------------------------------------------------- gradients
    def zero_grad(self) -> None:
        if self.requires_grad:
            if self.grad is None or self.grad.shape != self.data.shape:
                self.grad = np.zeros_like(self.data)
            else:
                self.grad[...] = 0

    def detach(self) -> "DiffTensor":
        """Copy of the value with no graph linkage (stop-gradient)."""
        return DiffTensor(self.data.copy(), op="detach", name=self.name)

    def backward(self, seed: Optional[np.ndarray] = None) -> None:
        backward(self, seed)

    # -------------------------------------------------------------- algebra
    def __add__(self, other): return F.add(self, other)
    def __radd__(self, other): return F.add(other, self)
    def __sub__(self, other): return F.sub(self, other)
    def __rsub__(self, other): return F.sub(other, self)
    def __mul__(self, other): return F.mul(self, other)
    def __rmul__(self, other): return F.mul(other, self)
    def __truediv__(self, other): return F.div(self, other)
    def __rtruediv__(self, other): return F.div(other, self)
    def __neg__(self): return F.neg(self)
    def __matmul__(self, other): return F.matmul(self, other)
    def __getitem__(self, index): return F.index(self, index)

    def reshape(self, *shape) -> "DiffTensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes) -> "DiffTensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)

    def swapaxes(self, axis1: int, axis2: int) -> "DiffTensor":
        return F.swapaxes(self, axis1, axis2)

    def sum(self, axis=None, keepdims: bool = False) -> "DiffTensor":
        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "DiffTensor":
        return F.mean(self, axis=axis, keepdims=keepdims)

    def exp(self) -> "DiffTensor":
        return F.exp(self)

    def log(self) -> "DiffTensor":
        return F.log(self)


@dataclass(frozen=True)
class OpRecord:
    """One recorded op: the output node, its op name and its input node ids."""

    node: DiffTensor
    op: str
    inputs: Tuple[int, ...]


class Graph:
    """Topologically ordered op records reachable from a root tensor."""

    def __init__(self, nodes: List[DiffTensor]) -> None:
        self.nodes = nodes

    @classmethod
    def trace(cls, root: DiffTensor) -> "Graph":
        """Collect every requires-grad ancestor of `root` (root included)."""
        seen: Dict[int, DiffTensor] = {}
        stack = [root]
        while stack:
            node = stack.pop()
            if node.node_id in seen or not node.requires_grad:
                continue
            seen[node.node_id] = node
            stack.extend(node._parents)
        ordered = [seen[key] for key in sorted(seen)]
        return cls(ordered)

    @property
    def records(self) -> List[OpRecord]:
        return [
            OpRecord(node, node.op, tuple(p.node_id for p in node._parents))
            for node in self.nodes
        ]

    def leaves(self) -> List[DiffTensor]:
        return [node for node in self.nodes if node.is_leaf]

    def run_backward(self, root: DiffTensor, seed: np.ndarray) -> None:
        """Replay local-gradient rules from `root`, visiting each node once."""
        pending: Dict[int, np.ndarray] = {root.node_id: seed}
        for node in reversed(self.nodes):
            upstream = pending.pop(node.node_id, None)
            if upstream is None:
                continue
            if node.is_leaf:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += upstream
                continue
            node.grad = upstream
            parent_grads = node._backward_fn(upstream)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent.node_id in pending:
                    pending[parent.node_id] = pending[parent.node_id] + parent_grad
                else:
                    pending[parent.node_id] = parent_grad


def backward(loss: DiffTensor, seed: Optional[np.ndarray] = None) -> None:
    """Populate `.grad` of every requires-grad ancestor of a scalar loss."""
    if loss.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        logger.debug("backward() on a tensor without requires_grad; nothing to do")
        return
    if seed is None:
        seed = np.ones_like(loss.data)
    graph = Graph.trace(loss)
    logger.debug("backward over %d nodes", len(graph.nodes))
    graph.run_backward(loss, np.asarray(seed, dtype=loss.dtype).reshape(loss.shape))


def zero_grad(tensors: Sequence[DiffTensor]) -> None:
    for tensor in tensors:
        tensor.zero_grad()


from . import functional as F  # noqa: E402  (ops need DiffTensor defined first)
