"""Differentiable primitives over `DiffTensor`.

Every op computes its value with numpy and, when any input requires a
gradient, attaches a local-gradient rule returning one array per input.

Broadcasting contract: two operands broadcast only when the shape of one is a
trailing suffix of the other's (leading batch extents). Anything else is a
`DimensionError` naming both shapes.

Reduction order is numpy's for a fixed array layout, so repeated backward
passes over the same graph give bit-identical gradients.
"""
from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import ndtr

from .exceptions import DimensionError, NumericError
from .tensor import DiffTensor, grad_enabled

Operand = Union[DiffTensor, np.ndarray, float, int]
Axis = Optional[Union[int, Tuple[int, ...]]]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
LOG_FLOOR = -100.0


def as_tensor(value: Operand, like: Optional[DiffTensor] = None) -> DiffTensor:
    if isinstance(value, DiffTensor):
        return value
    dtype = like.dtype if like is not None else None
    return DiffTensor(value, dtype=dtype, op="const")


def _result(data: np.ndarray, parents: Tuple[DiffTensor, ...], backward_fn, op: str) -> DiffTensor:
    if grad_enabled() and any(p.requires_grad for p in parents):
        return DiffTensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)
    return DiffTensor(data, op=op)


def _is_suffix(short: Tuple[int, ...], long: Tuple[int, ...]) -> bool:
    return len(short) <= len(long) and tuple(long[len(long) - len(short):]) == tuple(short)


def _check_broadcast(op: str, a: DiffTensor, b: DiffTensor) -> Tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    if _is_suffix(a.shape, b.shape):
        return b.shape
    if _is_suffix(b.shape, a.shape):
        return a.shape
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ beyond leading batch extents")


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back over the leading extents `shape` lacks."""
    if grad.shape == tuple(shape):
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead))).reshape(shape)


# ----------------------------------------------------------------- element-wise
def add(a: Operand, b: Operand) -> DiffTensor:
    a, b = _pair(a, b)
    _check_broadcast("add", a, b)

    def backward_fn(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return _result(a.data + b.data, (a, b), backward_fn, "add")


def sub(a: Operand, b: Operand) -> DiffTensor:
    a, b = _pair(a, b)
    _check_broadcast("sub", a, b)

    def backward_fn(g):
        return _reduce_to(g, a.shape), -_reduce_to(g, b.shape)

    return _result(a.data - b.data, (a, b), backward_fn, "sub")


def mul(a: Operand, b: Operand) -> DiffTensor:
    a, b = _pair(a, b)
    _check_broadcast("mul", a, b)

    def backward_fn(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), backward_fn, "mul")


def div(a: Operand, b: Operand) -> DiffTensor:
    a, b = _pair(a, b)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def backward_fn(g):
        return _reduce_to(g / b.data, a.shape), _reduce_to(-g * out / b.data, b.shape)

    return _result(out, (a, b), backward_fn, "div")


def neg(a: DiffTensor) -> DiffTensor:
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: DiffTensor) -> DiffTensor:
    out = np.exp(a.data)
    return _result(out, (a,), lambda g: (g * out,), "exp")


def log(a: DiffTensor, floor: float = LOG_FLOOR) -> DiffTensor:
    """Natural log with outputs clamped at `floor` (zero gradient where clamped)."""
    with np.errstate(divide="ignore"):
        raw = np.log(a.data)
    clamped = raw < floor
    out = np.where(clamped, floor, raw)

    def backward_fn(g):
        safe = np.where(clamped, 1.0, a.data)
        return (np.where(clamped, 0.0, g / safe),)

    return _result(out, (a,), backward_fn, "log")


def _pair(a: Operand, b: Operand) -> Tuple[DiffTensor, DiffTensor]:
    like = a if isinstance(a, DiffTensor) else b if isinstance(b, DiffTensor) else None
    return as_tensor(a, like), as_tensor(b, like)


# ------------------------------------------------------------------- structure
def reshape(a: DiffTensor, shape: Sequence[int]) -> DiffTensor:
    out = a.data.reshape(tuple(shape))
    return _result(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: DiffTensor, axes: Optional[Sequence[int]] = None) -> DiffTensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a: DiffTensor, axis1: int, axis2: int) -> DiffTensor:
    return _result(np.swapaxes(a.data, axis1, axis2), (a,), lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes")


def index(a: DiffTensor, key) -> DiffTensor:
    out = a.data[key]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return _result(np.array(out, copy=True), (a,), backward_fn, "index")


def narrow(a: DiffTensor, axis: int, start: int, stop: int) -> DiffTensor:
    """Contiguous slice [start, stop) along one axis."""
    axis = axis % a.ndim
    key = (slice(None),) * axis + (slice(start, stop),)
    out = a.data[key]

    def backward_fn(g):
        full = np.zeros_like(a.data)
        full[key] = g
        return (full,)

    return _result(np.array(out, copy=True), (a,), backward_fn, "narrow")


def concat(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(out, tensors, backward_fn, "concat")


def broadcast_to(a: DiffTensor, shape: Sequence[int]) -> DiffTensor:
    shape = tuple(shape)
    if not _is_suffix(a.shape, shape):
        raise DimensionError(f"broadcast_to: {a.shape} is not a trailing suffix of {shape}")
    out = np.broadcast_to(a.data, shape).copy()
    return _result(out, (a,), lambda g: (_reduce_to(g, a.shape),), "broadcast_to")


def sum(a: DiffTensor, axis: Axis = None, keepdims: bool = False) -> DiffTensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(np.asarray(out), (a,), backward_fn, "sum")


def mean(a: DiffTensor, axis: Axis = None, keepdims: bool = False) -> DiffTensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# ---------------------------------------------------------------- linear algebra
def matmul(a: DiffTensor, b: DiffTensor) -> DiffTensor:
    """Batched matrix product; leading batch extents broadcast by suffix only."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands need rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner extents differ for shapes {a.shape} and {b.shape}")
    batch_a, batch_b = a.shape[:-2], b.shape[:-2]
    if not (_is_suffix(batch_a, batch_b) or _is_suffix(batch_b, batch_a)):
        raise DimensionError(f"matmul: batch extents of {a.shape} and {b.shape} are not compatible")

    def backward_fn(g):
        grad_a = _reduce_to(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        grad_b = _reduce_to(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return grad_a, grad_b

    return _result(np.matmul(a.data, b.data), (a, b), backward_fn, "matmul")


def linear(x: DiffTensor, weight: DiffTensor, bias: Optional[DiffTensor] = None) -> DiffTensor:
    """x @ weight (+ bias) with weight stored as (in, out)."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def conv1x1(x: DiffTensor, weight: DiffTensor, bias: Optional[DiffTensor] = None) -> DiffTensor:
    """Per-pixel channel map: x (..., Cin, h, w), weight (Cout, Cin), bias (Cout,)."""
    if x.ndim < 3 or weight.ndim != 2 or x.shape[-3] != weight.shape[1]:
        raise DimensionError(f"conv1x1: input {x.shape} does not fit weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise DimensionError(f"conv1x1: bias {bias.shape} does not fit weight {weight.shape}")
    out = np.einsum("oc,...chw->...ohw", weight.data, x.data)
    if bias is not None:
        out = out + bias.data[:, None, None]
    lead = tuple(range(x.ndim - 3))

    def backward_fn(g):
        grad_x = np.einsum("oc,...ohw->...chw", weight.data, g)
        grad_w = np.einsum("...ohw,...chw->oc", g, x.data)
        grads = [grad_x, grad_w]
        if bias is not None:
            grads.append(g.sum(axis=lead + (-2, -1)))
        return tuple(grads)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _result(out, parents, backward_fn, "conv1x1")


# ----------------------------------------------------------------- nonlinearities
def _check_finite(op: str, a: DiffTensor) -> None:
    if not np.all(np.isfinite(a.data)):
        raise NumericError(f"{op}: input of shape {a.shape} contains NaN or infinite values")


def softmax(a: DiffTensor, axis: int = -1) -> DiffTensor:
    _check_finite("softmax", a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _result(out, (a,), backward_fn, "softmax")


def log_softmax(a: DiffTensor, axis: int = -1) -> DiffTensor:
    _check_finite("log_softmax", a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - logsum
    probs = np.exp(out)

    def backward_fn(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _result(out, (a,), backward_fn, "log_softmax")


def gelu(a: DiffTensor) -> DiffTensor:
    """Exact GELU, x * Phi(x), with Phi the standard normal CDF.

    The tanh approximation is not offered.
    """
    cdf = ndtr(a.data)
    out = a.data * cdf

    def backward_fn(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return _result(out, (a,), backward_fn, "gelu")


def layer_norm(
    x: DiffTensor,
    gain: DiffTensor,
    bias: DiffTensor,
    axis: int = -1,
    eps: float = 1e-5,
) -> DiffTensor:
    """Normalize each slice along `axis` to zero mean / unit variance, then affine."""
    axis = axis % x.ndim
    if gain.shape != (x.shape[axis],) or bias.shape != (x.shape[axis],):
        raise DimensionError(
            f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match axis extent of {x.shape}"
        )
    moved = np.moveaxis(x.data, axis, -1)
    mu = moved.mean(axis=-1, keepdims=True)
    centered = moved - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = centered * rstd
    out = np.moveaxis(xhat * gain.data + bias.data, -1, axis)

    def backward_fn(g):
        g_moved = np.moveaxis(g, axis, -1)
        reduce_axes = tuple(range(g_moved.ndim - 1))
        grad_gain = (g_moved * xhat).sum(axis=reduce_axes)
        grad_bias = g_moved.sum(axis=reduce_axes)
        dxhat = g_moved * gain.data
        grad_x = rstd * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return np.moveaxis(grad_x, -1, axis), grad_gain, grad_bias

    return _result(out, (x, gain, bias), backward_fn, "layer_norm")


def stop_gradient(a: DiffTensor) -> DiffTensor:
    return a.detach()


__all__ = [
    "add",
    "as_tensor",
    "broadcast_to",
    "concat",
    "conv1x1",
    "div",
    "exp",
    "gelu",
    "index",
    "layer_norm",
    "linear",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "narrow",
    "neg",
    "reshape",
    "softmax",
    "stop_gradient",
    "sub",
    "sum",
    "swapaxes",
    "transpose",
]
