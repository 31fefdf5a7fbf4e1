"""
Differentiable building blocks with explicit forward caches.

Forward functions return what their backward needs; nothing is stored on
shared objects, so concurrent forwards on the same parameters are safe.
Backward functions accumulate parameter gradients into the ParamStore.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from src.ifgkit.modules.netcore.CONSTANTS import NetcoreCONSTANTS
from src.ifgkit.modules.netcore.params import ParamStore, ShapeError


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map of (n, in) or (in,) input with an (in, out) weight."""
    if x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ShapeError(f"Dense shapes disagree: input {x.shape}, weight {weight.shape}, bias {bias.shape}")
    return x @ weight + bias


def dense_backward(grad: np.ndarray, x: np.ndarray, weight: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d_input, d_weight, d_bias)."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad.reshape(-1, grad.shape[-1])
    return grad @ weight.T, x2.T @ g2, g2.sum(axis=0)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(grad: np.ndarray, x: np.ndarray) -> np.ndarray:
    return grad * (x > 0.0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument never overflows
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def l2_normalize(v: np.ndarray) -> Tuple[np.ndarray, float]:
    """Unit vector and the original norm."""
    norm = float(np.linalg.norm(v))
    if norm <= NetcoreCONSTANTS.NORM_EPS:
        raise ValueError(f"Cannot normalize a vector of norm {norm}")
    return v / norm, norm


def l2_normalize_backward(grad: np.ndarray, unit: np.ndarray, norm: float) -> np.ndarray:
    return (grad - unit * np.dot(unit, grad)) / norm


def max_pool(features: np.ndarray, axis: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """Coordinatewise max along `axis` and the winning (first) indices."""
    winners = np.argmax(features, axis=axis)
    return np.take_along_axis(features, np.expand_dims(winners, axis), axis=axis).squeeze(axis), winners


def max_pool_backward(grad: np.ndarray, winners: np.ndarray, size: int, axis: int = 0) -> np.ndarray:
    """Route `grad` to the winning entries only."""
    shape = list(grad.shape)
    shape.insert(axis if axis >= 0 else len(shape) + axis + 1, size)
    out = np.zeros(shape)
    np.put_along_axis(out, np.expand_dims(winners, axis), np.expand_dims(grad, axis), axis=axis)
    return out


@dataclass
class MlpCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


class Mlp:
    """
    Dense stack with ReLU between layers.

    Parameters are `<prefix>.<i>.weight` and `<prefix>.<i>.bias` in `store`.
    With `final_activation` the last layer is followed by a ReLU as well.
    """

    def __init__(self, store: ParamStore, prefix: str, dims: Sequence[int], final_activation: bool = False) -> None:
        if len(dims) < 2:
            raise ValueError(f"Mlp needs at least input and output dims, got {dims}")
        self.store = store
        self.prefix = prefix
        self.dims = tuple(dims)
        self.final_activation = final_activation
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            store.add(f'{prefix}.{i}.weight', (fan_in, fan_out))
            store.add(f'{prefix}.{i}.bias', (fan_out,), init='zeros')

    @property
    def depth(self) -> int:
        return len(self.dims) - 1

    @property
    def parameter_names(self) -> List[str]:
        return [f'{self.prefix}.{i}.{kind}' for i in range(self.depth) for kind in ('weight', 'bias')]

    def _activated(self, i: int) -> bool:
        return i < self.depth - 1 or self.final_activation

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, MlpCache]:
        cache = MlpCache([], [])
        for i in range(self.depth):
            cache.inputs.append(x)
            z = dense_forward(x, self.store[f'{self.prefix}.{i}.weight'], self.store[f'{self.prefix}.{i}.bias'])
            cache.pre_activations.append(z)
            x = relu(z) if self._activated(i) else z
        return x, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, grad: np.ndarray, cache: MlpCache) -> np.ndarray:
        for i in reversed(range(self.depth)):
            if self._activated(i):
                grad = relu_backward(grad, cache.pre_activations[i])
            weight = self.store[f'{self.prefix}.{i}.weight']
            grad, d_weight, d_bias = dense_backward(grad, cache.inputs[i], weight)
            self.store.accumulate(f'{self.prefix}.{i}.weight', d_weight)
            self.store.accumulate(f'{self.prefix}.{i}.bias', d_bias)
        return grad
