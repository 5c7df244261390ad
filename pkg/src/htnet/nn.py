"""Parameter containers and the small layers every block is assembled from."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    """Base class: parameters are discovered from attributes in definition order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")
                    elif isinstance(item, Tensor) and item.requires_grad:
                        yield f"{name}.{i}", item

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def kaiming_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    # negative slope sqrt(5), the usual default for dense layers: bound = 1/sqrt(fan_in)
    gain = math.sqrt(2.0 / (1.0 + 5.0))
    bound = gain * math.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True):
        self.weight = Tensor(kaiming_uniform(rng, n_in, (n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y if self.bias is None else y + self.bias


class LayerNorm(Module):
    def __init__(self, n: int, eps: float = 1e-5):
        self.gamma = Tensor(np.ones(n), requires_grad=True)
        self.beta = Tensor(np.zeros(n), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return T.layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(Module):
    """Position-wise feedforward with residual and normalization.

    ``out = norm(residual + W2 relu(W1 x + b1) + b2)`` with inner width 4*d.
    """

    def __init__(self, d_model: int, rng: np.random.Generator):
        self.inner = Linear(d_model, 4 * d_model, rng)
        self.outer = Linear(4 * d_model, d_model, rng)
        self.norm = LayerNorm(d_model)

    def __call__(self, x: Tensor, residual: Tensor) -> Tensor:
        return self.norm(residual + self.outer(T.relu(self.inner(x))))


class LinearRes(Module):
    """Two linear layers with normalization, ReLU and an identity shortcut."""

    def __init__(self, d: int, rng: np.random.Generator):
        self.fc1 = Linear(d, d, rng, bias=False)
        self.norm1 = LayerNorm(d)
        self.fc2 = Linear(d, d, rng, bias=False)
        self.norm2 = LayerNorm(d)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.relu(self.norm1(self.fc1(x)))
        return T.relu(self.norm2(self.fc2(h)) + x)
