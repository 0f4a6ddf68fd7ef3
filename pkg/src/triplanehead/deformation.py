"""Expression-aware point deformation from a SECC pair and ray sample positions.

Three shallow conv stacks run at rendering resolution: an expression encoder
over the 6-channel SECC pair, a position encoder over the sample points
reshaped to ``3N`` channels, and a decoder over their channel concatenation
that emits one 3D offset per sample.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .autodiff import ShapeError, Tensor, ops
from .autodiff.nn import ConvStack
from .geometry import PointBatch


@dataclass
class DeformationBatch:
    delta: Tensor  # (H, W, N, 3)
    p_original: np.ndarray  # (H, W, N, 3)
    p_deformed: Tensor  # p_original + delta


class LED:
    def __init__(
        self,
        n_samples: int,
        rng: np.random.Generator | None = None,
        width: int = 16,
        layers: int = 2,
        out_init_scale: float = 0.1,
    ):
        if layers < 1 or layers > 4:
            raise ValueError("each LED stack has 1 to 4 layers")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_samples = n_samples
        hidden = [width] * layers
        self.expr = ConvStack([6, *hidden], rng, final_activation=True)
        self.pos = ConvStack([3 * n_samples, *hidden], rng, final_activation=True)
        self.dec = ConvStack([2 * width, *hidden[:-1], 3 * n_samples], rng, last_init_scale=out_init_scale)

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        out.update(self.expr.named_parameters("led.expr"))
        out.update(self.pos.named_parameters("led.pos"))
        out.update(self.dec.named_parameters("led.dec"))
        return out


def encode_expression(led: LED, secc_pair) -> Tensor:
    """Spatial embedding of a ``(6, H, W)`` SECC pair (driving channels first)."""
    x = secc_pair if isinstance(secc_pair, Tensor) else Tensor(secc_pair)
    if x.ndim != 3 or x.shape[0] != 6:
        raise ShapeError(f"expression encoder expects a (6, H, W) SECC pair, got {x.shape}")
    return led.expr(x)


def points_to_channels(points) -> Tensor:
    """``(H, W, N, 3)`` -> ``(3N, H, W)`` with per-pixel order x1, y1, z1, x2, ..."""
    p = points if isinstance(points, Tensor) else Tensor(points)
    h, w, n, _ = p.shape
    return ops.transpose(ops.reshape(p, (h, w, 3 * n)), (2, 0, 1))


def encode_positions(led: LED, points) -> Tensor:
    data = points.positions if isinstance(points, PointBatch) else points
    shape = data.shape
    if len(shape) != 4 or shape[2] != led.n_samples or shape[3] != 3:
        raise ShapeError(f"position encoder expects (H, W, {led.n_samples}, 3) points, got {shape}")
    return led.pos(points_to_channels(data))


def predict_deformation(led: LED, expr_latent: Tensor, pos_latent: Tensor) -> Tensor:
    if expr_latent.shape[1:] != pos_latent.shape[1:]:
        raise ShapeError(f"latent maps differ in size: {expr_latent.shape} vs {pos_latent.shape}")
    out = led.dec(ops.concat_channels([expr_latent, pos_latent]))  # (3N, H, W)
    _, h, w = out.shape
    return ops.reshape(ops.transpose(out, (1, 2, 0)), (h, w, led.n_samples, 3))


def perturb_points(points: np.ndarray, sigma: float, rng_seed: int | None = 0) -> np.ndarray:
    """Add ``N(0, sigma^2)`` noise per coordinate; ``sigma == 0`` returns the input unchanged."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return points
    return points + np.random.default_rng(rng_seed).normal(0.0, sigma, points.shape)


def deform(led: LED, points: PointBatch, secc_pair, sigma: float = 0.0, rng_seed: int | None = 0) -> DeformationBatch:
    """Predict offsets from (optionally perturbed) points and apply them to the original points."""
    noisy = perturb_points(points.positions, sigma, rng_seed)
    delta = predict_deformation(led, encode_expression(led, secc_pair), encode_positions(led, noisy))
    return DeformationBatch(delta, points.positions, ops.add(points.positions, delta))


def deformation_l1(delta: Tensor) -> Tensor:
    return ops.sum(ops.abs(delta))
