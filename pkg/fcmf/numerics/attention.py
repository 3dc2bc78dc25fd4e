"""Multi-head scaled dot-product attention over Tensors"""

from __future__ import annotations

import math

import numpy as np

from fcmf.exceptions import ConfigurationError, DimensionError
from fcmf.numerics import functional as F
from fcmf.numerics.tensor import Tensor, as_tensor


def split_heads(x: Tensor, heads: int) -> Tensor:
    """(..., n, d) -> (..., heads, n, d/heads)"""
    *lead, n, d = x.shape
    return F.swapaxes(F.reshape(x, (*lead, n, heads, d // heads)), -2, -3)


def merge_heads(x: Tensor) -> Tensor:
    """(..., heads, n, d_head) -> (..., n, heads*d_head)"""
    *lead, h, n, dh = x.shape
    return F.reshape(F.swapaxes(x, -2, -3), (*lead, n, h * dh))


def scaled_dot_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    mask: np.ndarray | None = None,
    heads: int = 1,
    bias: Tensor | None = None,
    return_weights: bool = False,
) -> Tensor | tuple[Tensor, Tensor]:
    """Per-head softmax(Q Kᵀ / sqrt(d/heads)) V, heads re-concatenated

    Args:
        q: queries (..., n_q, d)
        k: keys (..., n_k, d)
        v: values (..., n_k, d)
        mask: boolean (..., n_k), True marks a padded key (zero weight)
        heads: number of heads; must divide d
        bias: optional additive logits broadcastable to (..., heads, n_q, n_k)
        return_weights: also return the (..., heads, n_q, n_k) weights

    Returns:
        (..., n_q, d) attention output, optionally with the weights
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    if heads <= 0 or d % heads != 0:
        raise ConfigurationError(f"hidden size {d} is not divisible by {heads} heads")
    if k.shape[-1] != d or v.shape[-1] != d or k.shape[-2] != v.shape[-2]:
        raise DimensionError(f"attention: q {q.shape}, k {k.shape}, v {v.shape} are inconsistent")

    qh, kh, vh = split_heads(q, heads), split_heads(k, heads), split_heads(v, heads)
    scores = F.mul(F.matmul(qh, F.transpose(kh)), 1.0 / math.sqrt(d // heads))
    if bias is not None:
        scores = F.add(scores, bias)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape[-1] != k.shape[-2]:
            raise DimensionError(f"attention: mask {m.shape} does not match {k.shape[-2]} keys")
        # (..., n_k) -> (..., 1, 1, n_k) against (..., heads, n_q, n_k)
        scores = F.add(scores, F.mask_bias(m)[..., None, None, :])
    weights = F.softmax(scores, axis=-1)
    out = merge_heads(F.matmul(weights, vh))
    if return_weights:
        return out, weights
    return out
