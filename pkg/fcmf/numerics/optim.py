"""Adam optimizer and gradient clipping"""

from __future__ import annotations

import math
from collections.abc import Mapping

import numpy as np

from fcmf.exceptions import NonFiniteError
from fcmf.numerics.tensor import Tensor


def _finite_or_missing(grad: np.ndarray | None) -> bool:
    return grad is None or bool(np.all(np.isfinite(grad)))


def clip_grad_norm(params: Mapping[str, Tensor], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm

    Returns:
        The norm before clipping
    """
    total = 0.0
    for name in sorted(params):
        g = params[name].grad
        if g is not None:
            total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for p in params.values():
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Adam:
    """Adam with bias correction

    Attributes:
        lr: learning rate
        betas: (beta1, beta2) moment decay rates
        eps: denominator fuzz
        step_count: number of completed updates
    """

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 3e-5,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        """One bias-corrected update of every parameter holding a gradient

        Raises:
            NonFiniteError: a gradient holds NaN/Inf; no parameter or moment is touched
        """
        bad = [name for name in sorted(self.params) if not _finite_or_missing(self.params[name].grad)]
        if bad:
            raise NonFiniteError(f"non-finite gradient for {', '.join(bad)}")
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for name in sorted(self.params):
            p = self.params[name]
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def hyperparameters(self) -> dict[str, float | int | list[float]]:
        return {"lr": self.lr, "betas": list(self.betas), "eps": self.eps, "step_count": self.step_count}
