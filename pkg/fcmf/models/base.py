"""Module base class - parameter registry, train/eval switching, state dicts"""

from __future__ import annotations

from collections.abc import Iterator, Mapping

import numpy as np

from fcmf.exceptions import ConfigurationError
from fcmf.numerics.tensor import Tensor


def parameter(data: np.ndarray) -> Tensor:
    """Learnable leaf tensor"""
    return Tensor(data, requires_grad=True)


def normal_init(rng: np.random.Generator, shape: tuple[int, ...], std: float = 0.02) -> Tensor:
    return parameter(rng.normal(0.0, std, size=shape))


class Module:
    """Container of parameters and sub-modules

    Parameters are Tensor attributes with requires_grad=True; sub-modules are
    Module attributes or lists of Modules. Names are dotted attribute paths
    (e.g. "encoder.layers.0.attention.query.weight").
    """

    def __init__(self) -> None:
        self.training = True
        self.rng: np.random.Generator | None = None

    # Traversal

    def children(self) -> Iterator[tuple[str, Module]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list | tuple):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                full = f"{prefix}{name}"
                value.name = full
                params[full] = value
        for name, child in self.children():
            params.update(child.named_parameters(prefix=f"{prefix}{name}."))
        return params

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    # Modes

    def train(self, rng: np.random.Generator | None = None) -> Module:
        """Training mode; dropout draws from `rng`"""
        self.training = True
        self.rng = rng
        for _, child in self.children():
            child.train(rng)
        return self

    def eval(self) -> Module:
        self.training = False
        self.rng = None
        for _, child in self.children():
            child.eval()
        return self

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.zero_grad()

    # Persistence

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in sorted(self.named_parameters().items())}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        """Copy arrays into the existing parameters (names and shapes must match exactly)"""
        params = self.named_parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise ConfigurationError(f"state dict mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")
        for name, p in params.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != p.shape:
                raise ConfigurationError(f"parameter '{name}' has shape {p.shape}, checkpoint has {array.shape}")
            p.data[...] = array
