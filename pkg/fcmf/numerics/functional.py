"""Differentiable kernels

Every function takes Tensors (or array-likes, treated as constants) and
returns a Tensor whose backward rule is attached via Tensor.from_op.
Elementwise kernels broadcast like numpy; their gradients are summed back
to the parent's shape.
"""

from __future__ import annotations

from collections.abc import Sequence
from typing import Any

import numpy as np

from fcmf.exceptions import ConfigurationError, DimensionError
from fcmf.numerics.tensor import Tensor, as_tensor

MASK_VALUE = -1e30


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from e


# Elementwise arithmetic


def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor.from_op(a.data + b.data, (a, b), backward, "add")


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def backward(g: np.ndarray):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor.from_op(a.data - b.data, (a, b), backward, "sub")


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def backward(g: np.ndarray):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor.from_op(a.data * b.data, (a, b), backward, "mul")


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")

    def backward(g: np.ndarray):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        )

    return Tensor.from_op(a.data / b.data, (a, b), backward, "div")


def neg(a: Any) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(-a.data, (a,), lambda g: (-g,), "neg")


def exp(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return Tensor.from_op(out, (a,), lambda g: (g * out,), "exp")


def log(a: Any) -> Tensor:
    a = as_tensor(a)
    return Tensor.from_op(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def relu(a: Any) -> Tensor:
    a = as_tensor(a)
    positive = a.data > 0
    return Tensor.from_op(np.where(positive, a.data, 0.0), (a,), lambda g: (g * positive,), "relu")


def clamp_min(a: Any, minimum: float) -> Tensor:
    """max(a, minimum); the gradient is zero where the clamp is active"""
    a = as_tensor(a)
    keep = a.data > minimum
    return Tensor.from_op(np.where(keep, a.data, minimum), (a,), lambda g: (g * keep,), "clamp_min")


def sigmoid(a: Any) -> Tensor:
    a = as_tensor(a)
    # exp of a non-positive argument only, so large |a| cannot overflow
    e = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return Tensor.from_op(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# Reductions and shape kernels


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    if any(not -ndim <= ax < ndim for ax in axes):
        raise DimensionError(f"axis {axis} is invalid for a {ndim}-d tensor")
    return tuple(ax % ndim for ax in axes)


def sum(a: Any, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor.from_op(out, (a,), backward, "sum")


def mean(a: Any, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = a.data.mean(axis=axes, keepdims=keepdims) if axes else a.data.copy()

    def backward(g: np.ndarray):
        if not keepdims and axes:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return Tensor.from_op(out, (a,), backward, "mean")


def mean_pool(a: Any, axis: int = -2) -> Tensor:
    """Average over a spatial/sequence axis (grid cells by default)"""
    return mean(a, axis=axis)


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from e
    return Tensor.from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def swapaxes(a: Any, axis1: int, axis2: int) -> Tensor:
    a = as_tensor(a)
    out = np.swapaxes(a.data, axis1, axis2)
    return Tensor.from_op(out, (a,), lambda g: (np.swapaxes(g, axis1, axis2),), "swapaxes")


def transpose(a: Any) -> Tensor:
    """Swap the last two axes"""
    return swapaxes(a, -1, -2)


def broadcast_to(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        out = np.broadcast_to(a.data, tuple(shape)).copy()
    except ValueError as e:
        raise DimensionError(f"broadcast_to: {a.shape} cannot broadcast to {tuple(shape)}") from e
    return Tensor.from_op(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def getitem(a: Any, index: Any) -> Tensor:
    a = as_tensor(a)
    out = a.data[index]

    def backward(g: np.ndarray):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return Tensor.from_op(np.array(out, dtype=np.float64), (a,), backward, "getitem")


def take(a: Any, indices: Any, axis: int = 0) -> Tensor:
    """Gather slices along `axis` (embedding lookup, per-aspect repetition)"""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % a.ndim
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[axis]):
        raise DimensionError(f"take: indices out of range for axis {axis} of size {a.shape[axis]}")
    out = np.take(a.data, idx, axis=axis)

    def backward(g: np.ndarray):
        grad = np.zeros_like(a.data)
        moved = np.moveaxis(grad, axis, 0)
        g_moved = np.moveaxis(g, tuple(range(axis, axis + idx.ndim)), tuple(range(idx.ndim)))
        np.add.at(moved, idx, g_moved)
        return (grad,)

    return Tensor.from_op(out, (a,), backward, "take")


def concat(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise DimensionError("concat: nothing to concatenate")
    try:
        out = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise DimensionError(f"concat: incompatible shapes {[p.shape for p in parts]} on axis {axis}") from e
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor.from_op(out, parts, backward, "concat")


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([p.data for p in parts], axis=axis)
    except ValueError as e:
        raise DimensionError(f"stack: incompatible shapes {[p.shape for p in parts]}") from e

    def backward(g: np.ndarray):
        return tuple(np.take(g, i, axis=axis) for i in range(len(parts)))

    return Tensor.from_op(out, parts, backward, "stack")


# Linear algebra


def matmul(a: Any, b: Any) -> Tensor:
    """Matrix product over the last two axes (leading axes broadcast)"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner dimensions disagree for shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as e:
        raise DimensionError(f"matmul: leading dimensions of {a.shape} and {b.shape} do not broadcast") from e

    def backward(g: np.ndarray):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor.from_op(out, (a, b), backward, "matmul")


def linear(x: Any, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T + bias with weight shaped (out_features, in_features)"""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    out = np.matmul(x.data, weight.data.T)
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g: np.ndarray):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        gx = np.matmul(g, weight.data)
        gw = g2.T @ x2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor.from_op(out, parents, backward, "linear")


# Normalisation and probabilities


def softmax(x: Any, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _normalize_axes(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(out, (x,), backward, "softmax")


def log_softmax(x: Any, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    _normalize_axes(axis, x.ndim)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g: np.ndarray):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, "log_softmax")


def layernorm(x: Any, weight: Tensor | None = None, bias: Tensor | None = None, eps: float = 1e-12) -> Tensor:
    """Normalise the last axis to mean 0 / variance 1, then scale and shift"""
    x = as_tensor(x)
    n = x.shape[-1]
    if weight is not None and weight.shape != (n,):
        raise DimensionError(f"layernorm: weight {weight.shape} does not match feature size {n}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centred = x.data - mu
    var = (centred * centred).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centred * inv
    out = xhat
    if weight is not None:
        out = out * weight.data
    if bias is not None:
        out = out + bias.data
    parents: list[Tensor] = [x]
    if weight is not None:
        parents.append(weight)
    if bias is not None:
        parents.append(bias)

    def backward(g: np.ndarray):
        dxhat = g * weight.data if weight is not None else g
        dx = inv / n * (n * dxhat - dxhat.sum(axis=-1, keepdims=True) - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        grads: list[np.ndarray] = [dx]
        lead = tuple(range(g.ndim - 1))
        if weight is not None:
            grads.append((g * xhat).sum(axis=lead))
        if bias is not None:
            grads.append(g.sum(axis=lead))
        return grads

    return Tensor.from_op(out, parents, backward, "layernorm")


def dropout(x: Any, p: float, training: bool, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity in evaluation mode or when p == 0"""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ConfigurationError("dropout in training mode needs a seeded generator")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def pick(x: Any, targets: Any) -> Tensor:
    """x[i, targets[i]] for a 2-d x (used for negative log-likelihood)"""
    x = as_tensor(x)
    idx = np.asarray(targets, dtype=np.int64)
    if x.ndim != 2 or idx.shape != (x.shape[0],):
        raise DimensionError(f"pick: expected (M, C) scores and M targets, got {x.shape} and {idx.shape}")
    rows = np.arange(x.shape[0])
    out = x.data[rows, idx]

    def backward(g: np.ndarray):
        grad = np.zeros_like(x.data)
        grad[rows, idx] = g
        return (grad,)

    return Tensor.from_op(out, (x,), backward, "pick")


def mask_bias(mask: np.ndarray) -> np.ndarray:
    """Additive logit bias: MASK_VALUE where mask is True (padded), else 0"""
    return np.where(np.asarray(mask, dtype=bool), MASK_VALUE, 0.0)
