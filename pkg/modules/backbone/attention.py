"""Scaled dot-product multi-head self-attention.

Shared by the spatial MSA of the encoder layers (sequence axis = the N+1
tokens of one frame) and by the temporal MSA of the adapters (sequence axis =
the T frames of one spatial token). Leading axes are batch axes and never mix.
"""
from __future__ import annotations

import math
from typing import Optional, Tuple

from core import functional as F
from core.exceptions import DimensionError
from core.tensor import DiffTensor


def _split_heads(x: DiffTensor, heads: int) -> DiffTensor:
    # (..., S, E) -> (..., heads, S, E/heads)
    *lead, seq, width = x.shape
    return x.reshape(tuple(lead) + (seq, heads, width // heads)).swapaxes(-2, -3)


def _merge_heads(x: DiffTensor) -> DiffTensor:
    *lead, heads, seq, head_dim = x.shape
    return x.swapaxes(-2, -3).reshape(tuple(lead) + (seq, heads * head_dim))


def multi_head_self_attention(
    x: DiffTensor,
    wq: DiffTensor,
    wk: DiffTensor,
    wv: DiffTensor,
    wo: DiffTensor,
    heads: int,
    bq: Optional[DiffTensor] = None,
    bk: Optional[DiffTensor] = None,
    bv: Optional[DiffTensor] = None,
    bo: Optional[DiffTensor] = None,
) -> Tuple[DiffTensor, DiffTensor]:
    """Self-attention over axis -2 of `x` (..., S, E).

    Q, K and V are projections of the same input. Projection weights are
    stored (in, out); the per-head width is E / heads.

    Returns:
        (output (..., S, E), attention weights (..., heads, S, S))
    """
    width = wq.shape[1]
    if heads < 1 or width % heads:
        raise DimensionError(f"attention width {width} is not divisible by {heads} heads")
    if x.shape[-1] != wq.shape[0]:
        raise DimensionError(f"attention input {x.shape} does not fit projection {wq.shape}")

    q = _split_heads(F.linear(x, wq, bq), heads)
    k = _split_heads(F.linear(x, wk, bk), heads)
    v = _split_heads(F.linear(x, wv, bv), heads)

    scale = 1.0 / math.sqrt(width // heads)
    scores = F.mul(F.matmul(q, k.swapaxes(-1, -2)), scale)
    weights = F.softmax(scores, axis=-1)
    context = _merge_heads(F.matmul(weights, v))
    return F.linear(context, wo, bo), weights


__all__ = ["multi_head_self_attention"]
