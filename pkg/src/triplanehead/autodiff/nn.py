"""Small parameter containers: dense layers and shallow conv stacks."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import ops
from .tensor import ShapeError, Tensor


def _he_std(fan_in: int, alpha: float = 0.2) -> float:
    return float(np.sqrt(2.0 / ((1.0 + alpha**2) * fan_in)))


class Dense:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, init_scale: float = 1.0):
        self.w = Tensor(rng.normal(0.0, _he_std(n_in) * init_scale, (n_in, n_out)), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 2 or x.shape[1] != self.w.shape[0]:
            raise ShapeError(f"dense: input {x.shape} does not match weight {self.w.shape}")
        return x @ self.w + self.b

    def named_parameters(self, prefix: str) -> "OrderedDict[str, Tensor]":
        return OrderedDict([(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)])


class Conv2d:
    def __init__(
        self,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        kernel: int = 3,
        stride: int = 1,
        init_scale: float = 1.0,
    ):
        std = _he_std(c_in * kernel * kernel) * init_scale
        self.w = Tensor(rng.normal(0.0, std, (c_out, c_in, kernel, kernel)), requires_grad=True)
        self.b = Tensor(np.zeros(c_out), requires_grad=True)
        self.stride = stride
        self.pad = kernel // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.w, self.b, stride=self.stride, pad=self.pad)

    def named_parameters(self, prefix: str) -> "OrderedDict[str, Tensor]":
        return OrderedDict([(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)])


class ConvStack:
    """Fully convolutional stack with leaky ReLU between layers.

    The last layer is linear unless ``final_activation`` is set.
    """

    def __init__(
        self,
        channels: list[int],
        rng: np.random.Generator,
        kernel: int = 3,
        strides: list[int] | None = None,
        alpha: float = 0.2,
        final_activation: bool = False,
        last_init_scale: float = 1.0,
    ):
        if len(channels) < 2:
            raise ValueError("ConvStack needs at least an input and an output width")
        strides = strides or [1] * (len(channels) - 1)
        n = len(channels) - 1
        self.layers = [
            Conv2d(
                channels[i],
                channels[i + 1],
                rng,
                kernel=kernel,
                stride=strides[i],
                init_scale=last_init_scale if i == n - 1 else 1.0,
            )
            for i in range(n)
        ]
        self.alpha = alpha
        self.final_activation = final_activation

    @property
    def in_channels(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def out_channels(self) -> int:
        return self.layers[-1].w.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1 or self.final_activation:
                x = ops.leaky_relu(x, self.alpha)
        return x

    def named_parameters(self, prefix: str) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        for i, layer in enumerate(self.layers):
            out.update(layer.named_parameters(f"{prefix}.layer{i}"))
        return out


def zero_(params) -> None:
    """Set every tensor in ``params`` (mapping or iterable) to zero in place."""
    values = params.values() if hasattr(params, "values") else params
    for t in values:
        t.data[...] = 0.0
