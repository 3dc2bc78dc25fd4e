"""Tensor - dense float64 array with reverse-mode differentiation

The graph is built while kernels run (define-by-run) and thrown away after
each backward pass. Every kernel lives in fcmf.numerics.functional and
creates its output through Tensor.from_op, attaching a backward rule that
maps the output gradient to one gradient per parent.
"""

from __future__ import annotations

import contextlib
from collections.abc import Callable, Iterator, Sequence
from typing import Any

import numpy as np

from fcmf.exceptions import NonFiniteError

BackwardRule = Callable[[np.ndarray], Sequence[np.ndarray | None]]

_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block"""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def is_grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    """Dense row-major float64 array with an optional gradient buffer

    Attributes:
        data: numpy array (float64)
        requires_grad: whether backward should produce a gradient for this tensor
        grad: same-shape float64 array after backward, else None
        op: name of the kernel that produced this tensor ("leaf" for inputs/params)
        name: optional label (parameter name)
    """

    __array_priority__ = 100.0

    def __init__(self, data: Any, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64, copy=True)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardRule | None = None

    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence[Tensor], backward: BackwardRule, op: str) -> Tensor:
        """Create a kernel output, recording the graph edge when any parent needs a gradient"""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.grad = None
        out.op = op
        out.name = None
        track = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    # Basic properties

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad}{label})"

    def __len__(self) -> int:
        return self.data.shape[0]

    # Differentiation

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf's .grad

        Args:
            grad: upstream gradient; defaults to ones (a scalar loss gives 1.0)
        """
        ComputeGraph.from_output(self).backward(grad)

    # Operators (implemented in functional)

    def __add__(self, other: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.div(other, self)

    def __neg__(self) -> Tensor:
        from fcmf.numerics import functional as F

        return F.neg(self)

    def __matmul__(self, other: Tensor) -> Tensor:
        from fcmf.numerics import functional as F

        return F.matmul(self, other)

    def __getitem__(self, index: Any) -> Tensor:
        from fcmf.numerics import functional as F

        return F.getitem(self, index)

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        from fcmf.numerics import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        from fcmf.numerics import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        from fcmf.numerics import functional as F

        target = shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape
        return F.reshape(self, target)

    def swapaxes(self, a: int, b: int) -> Tensor:
        from fcmf.numerics import functional as F

        return F.swapaxes(self, a, b)


def as_tensor(value: Any) -> Tensor:
    """Wrap arrays/scalars as constant (non-differentiable) tensors"""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


class ComputeGraph:
    """Topologically ordered kernel applications reachable from one output

    nodes[i]'s parents always appear before nodes[i]; backward visits each
    node exactly once, in reverse order.
    """

    def __init__(self, output: Tensor, nodes: list[Tensor]):
        self.output = output
        self.nodes = nodes

    @classmethod
    def from_output(cls, output: Tensor) -> ComputeGraph:
        order: list[Tensor] = []
        visited: set[int] = set()
        # Iterative post-order DFS; encoder graphs are deep enough to hit the recursion limit
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return cls(output, order)

    def __len__(self) -> int:
        return len(self.nodes)

    def first_non_finite(self) -> Tensor | None:
        """Earliest node (in forward order) holding NaN/Inf"""
        for node in self.nodes:
            if not np.all(np.isfinite(node.data)):
                return node
        return None

    def check_finite(self) -> None:
        node = self.first_non_finite()
        if node is not None:
            raise NonFiniteError(f"non-finite values first produced by kernel '{node.op}' (shape {node.shape})")

    def backward(self, grad: np.ndarray | None = None) -> None:
        output = self.output
        if not output.requires_grad:
            return
        seed = np.ones_like(output.data) if grad is None else np.asarray(grad, dtype=np.float64)
        # Intermediate gradients are local to this pass; leaves accumulate.
        grads: dict[int, np.ndarray] = {id(output): seed}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
