"""Differentiable ops over :class:`Tensor`.

Elementwise binary ops follow numpy broadcasting; gradients are summed back
to the operand shape. Images are channel-first ``(C, H, W)`` with no batch
axis.
"""

from __future__ import annotations

import builtins

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, record


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ---------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return record(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return record(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return record(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        ),
    )


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return record(
        "div",
        out,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None,
        ),
    )


def neg(a: Tensor) -> Tensor:
    return record("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return record(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (
            g @ b.data.T if a.requires_grad else None,
            a.data.T @ g if b.requires_grad else None,
        ),
    )


# -- pointwise nonlinearities -------------------------------------------


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return record("exp", out, (a,), lambda g: (g * out,))


def abs(a: Tensor) -> Tensor:
    return record("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    slope = np.where(a.data > 0, 1.0, alpha)
    return record("leaky_relu", a.data * slope, (a,), lambda g: (g * slope,))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    out = np.logaddexp(0.0, x)
    return record("softplus", out, (a,), lambda g: (g * 0.5 * (1.0 + np.tanh(0.5 * x)),))


# -- reductions and layout ----------------------------------------------


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape),)

    return record("sum", out, (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return sum(a, axis=axis, keepdims=keepdims) * (1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return record("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record("transpose", a.data.transpose(axes), (a,), lambda g: (g.transpose(inverse),))


def getitem(a: Tensor, index) -> Tensor:
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return record("getitem", a.data[index], (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return record("concat", out, tensors, bw)


def concat_channels(tensors) -> Tensor:
    """Stack ``(C_i, H, W)`` maps into ``(sum C_i, H, W)``."""
    tensors = [as_tensor(t) for t in tensors]
    hw = {t.shape[1:] for t in tensors}
    if builtins.any(t.ndim != 3 for t in tensors) or len(hw) != 1:
        raise ShapeError(f"concat_channels: need (C,H,W) maps sharing H,W, got {[t.shape for t in tensors]}")
    return concat(tensors, axis=0)


def cumsum(a: Tensor, axis: int = -1, exclusive: bool = False) -> Tensor:
    """Running sum along ``axis``; ``exclusive`` shifts it so element i sums j < i."""
    out = np.cumsum(a.data, axis=axis)
    if exclusive:
        out = out - a.data

    def bw(g):
        rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
        return (rev - g if exclusive else rev,)

    return record("cumsum", out, (a,), bw)


# -- image ops ----------------------------------------------------------


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    c, ho, wo = windows.shape[:3]
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c * k * k, ho * wo)
    return cols, ho, wo, xp.shape


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, pad: int = 0) -> Tensor:
    """2D cross-correlation of a ``(C_in, H, W)`` map with ``(C_out, C_in, k, k)`` weights."""
    if x.ndim != 3 or weight.ndim != 4 or weight.shape[1] != x.shape[0] or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f"conv2d: bias {bias.shape} does not match {weight.shape[0]} output channels")
    c_out, c_in, k, _ = weight.shape
    if x.shape[1] + 2 * pad < k or x.shape[2] + 2 * pad < k:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {x.shape}")
    cols, ho, wo, padded_shape = _im2col(x.data, k, stride, pad)
    wmat = weight.data.reshape(c_out, -1)
    out = wmat @ cols
    if bias is not None:
        out = out + bias.data[:, None]
    out = out.reshape(c_out, ho, wo)

    def bw(g):
        g2 = g.reshape(c_out, -1)
        gw = (g2 @ cols.T).reshape(weight.shape) if weight.requires_grad else None
        gb = g2.sum(axis=1) if bias is not None and bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (wmat.T @ g2).reshape(c_in, k, k, ho, wo)
            gxp = np.zeros(padded_shape)
            for i in range(k):
                for j in range(k):
                    gxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += gcols[:, i, j]
            gx = gxp[:, pad : pad + x.shape[1], pad : pad + x.shape[2]]
        return (gx, gw, gb) if bias is not None else (gx, gw)

    parents = (x, weight, bias) if bias is not None else (x, weight)
    return record("conv2d", out, parents, bw)


def upsample2x_nearest(x: Tensor) -> Tensor:
    if x.ndim != 3:
        raise ShapeError(f"upsample2x_nearest: expected (C,H,W), got {x.shape}")
    out = x.data.repeat(2, axis=1).repeat(2, axis=2)
    c, h, w = x.shape
    return record(
        "upsample2x_nearest",
        out,
        (x,),
        lambda g: (g.reshape(c, h, 2, w, 2).sum(axis=(2, 4)),),
    )


def grid_sample2d(plane: Tensor, coords: Tensor, axes: tuple[int, int] = (0, 1)) -> Tensor:
    """Bilinear lookup of a ``(C, R0, R1)`` grid at continuous node coordinates.

    ``coords`` is ``(M, D)`` in grid units; column ``axes[0]`` indexes axis 1
    of the plane and column ``axes[1]`` indexes axis 2. Coordinates outside
    ``[0, R-1]`` are clamped to the border, where the coordinate gradient is
    zero. Returns ``(M, C)``.
    """
    if plane.ndim != 3 or coords.ndim != 2 or max(axes) >= coords.shape[1]:
        raise ShapeError(f"grid_sample2d: plane {plane.shape}, coords {coords.shape}, axes {axes}")
    c, r0, r1 = plane.shape
    if r0 < 2 or r1 < 2:
        raise ShapeError(f"grid_sample2d: plane resolution must be >= 2, got {plane.shape}")
    cu, cv = coords.data[:, axes[0]], coords.data[:, axes[1]]
    u = np.clip(cu, 0.0, r0 - 1)
    v = np.clip(cv, 0.0, r1 - 1)
    i0 = np.minimum(np.floor(u).astype(np.intp), r0 - 2)
    j0 = np.minimum(np.floor(v).astype(np.intp), r1 - 2)
    fu = u - i0
    fv = v - j0
    flat = plane.data.reshape(c, -1)
    base = i0 * r1 + j0
    corners = (base, base + r1, base + 1, base + r1 + 1)  # 00, 10, 01, 11
    f00, f10, f01, f11 = (flat[:, idx] for idx in corners)
    weights = ((1 - fu) * (1 - fv), fu * (1 - fv), (1 - fu) * fv, fu * fv)
    out = (weights[0] * f00 + weights[1] * f10 + weights[2] * f01 + weights[3] * f11).T

    def bw(g):
        gplane = None
        if plane.requires_grad:
            idx = np.concatenate(corners)
            w = np.concatenate(weights)
            gflat = np.empty((c, r0 * r1))
            for ch in range(c):
                gflat[ch] = np.bincount(idx, weights=w * np.tile(g[:, ch], 4), minlength=r0 * r1)
            gplane = gflat.reshape(plane.shape)
        gcoords = None
        if coords.requires_grad:
            gt = g.T
            du = ((1 - fv) * (f10 - f00) + fv * (f11 - f01)) * gt
            dv = ((1 - fu) * (f01 - f00) + fu * (f11 - f10)) * gt
            gcoords = np.zeros(coords.shape)
            gcoords[:, axes[0]] = du.sum(axis=0) * ((cu >= 0) & (cu <= r0 - 1))
            gcoords[:, axes[1]] += dv.sum(axis=0) * ((cv >= 0) & (cv <= r1 - 1))
        return gplane, gcoords

    return record("grid_sample2d", out, (plane, coords), bw)
