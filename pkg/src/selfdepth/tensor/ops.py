"""Structured differentiable ops: convolution, sampling, resizing.

Forward/backward array math is delegated to the selected kernel backend
(:mod:`selfdepth.kernels`); this module only wires the tape closures.
All image tensors are NCHW with a mandatory batch axis.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeError
from .core import (
    Tensor,
    absolute,
    add,
    apply_op,
    as_tensor,
    getitem,
    pad_zero,
    reshape,
    tmean,
)


def conv2d(x, w, bias=None, stride: int = 1, padding: int = 0):
    """Cross-correlate x [N,C,H,W] with w [K,C,kh,kw]."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D operands, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input {x.shape[1]} vs kernel {w.shape[1]}"
        )
    kh, kw = w.shape[2], w.shape[3]
    if kh > x.shape[2] + 2 * padding or kw > x.shape[3] + 2 * padding:
        raise ShapeError(
            f"conv2d kernel {kh}x{kw} larger than padded input "
            f"{x.shape[2] + 2 * padding}x{x.shape[3] + 2 * padding}"
        )
    out_data = kernels.conv2d_forward(x.data, w.data, stride, padding)
    h_in, w_in = x.shape[2], x.shape[3]

    def bwd(g):
        g = np.ascontiguousarray(g)
        gx = (
            kernels.conv2d_backward_input(g, w.data, stride, padding, h_in, w_in)
            if x.requires_grad
            else None
        )
        gw = (
            kernels.conv2d_backward_kernel(g, x.data, stride, padding, kh, kw)
            if w.requires_grad
            else None
        )
        return gx, gw

    out = apply_op("conv2d", out_data, (x, w), bwd)
    if bias is not None:
        bias = as_tensor(bias)
        out = add(out, reshape(bias, (1, bias.shape[0], 1, 1)))
    return out


def grid_sample(src, coords):
    """Bilinearly sample src [N,C,H,W] at coords [N,2,Hc,Wc] (x, y in pixels).

    Out-of-range corner taps contribute zero; differentiable w.r.t. both
    the source values and the coordinates.
    """
    src, coords = as_tensor(src), as_tensor(coords)
    if coords.shape[1] != 2:
        raise ShapeError(f"grid_sample coords must be [N,2,H,W], got {coords.shape}")
    cx = np.ascontiguousarray(coords.data[:, 0])
    cy = np.ascontiguousarray(coords.data[:, 1])
    out_data = kernels.bilinear_sample_forward(src.data, cx, cy)

    def bwd(g):
        gsrc, gcx, gcy = kernels.bilinear_sample_backward(
            np.ascontiguousarray(g), src.data, cx, cy
        )
        gc = np.stack([gcx, gcy], axis=1) if coords.requires_grad else None
        return (gsrc if src.requires_grad else None), gc

    return apply_op("grid_sample", out_data, (src, coords), bwd)


def _resize_grid(h_in, w_in, h_out, w_out, dtype):
    # align-corners mapping; degenerate axes collapse to coordinate 0
    ys = (
        np.linspace(0.0, h_in - 1.0, h_out, dtype=dtype)
        if h_out > 1
        else np.zeros(1, dtype=dtype)
    )
    xs = (
        np.linspace(0.0, w_in - 1.0, w_out, dtype=dtype)
        if w_out > 1
        else np.zeros(1, dtype=dtype)
    )
    return np.meshgrid(xs, ys)


def bilinear_resize(x, out_hw):
    """Resize x [N,C,H,W] to (H',W') with align-corners bilinear sampling."""
    x = as_tensor(x)
    h_out, w_out = out_hw
    n = x.shape[0]
    if (h_out, w_out) == (x.shape[2], x.shape[3]):
        return x
    cx, cy = _resize_grid(x.shape[2], x.shape[3], h_out, w_out, x.data.dtype)
    cx = np.broadcast_to(cx, (n, h_out, w_out)).copy()
    cy = np.broadcast_to(cy, (n, h_out, w_out)).copy()
    out_data = kernels.bilinear_sample_forward(x.data, cx, cy)

    def bwd(g):
        gsrc, _, _ = kernels.bilinear_sample_backward(
            np.ascontiguousarray(g), x.data, cx, cy
        )
        return (gsrc,)

    return apply_op("bilinear_resize", out_data, (x,), bwd)


_REFLECT_CACHE: dict[tuple, np.ndarray] = {}


def pad_reflect(x, p: int):
    """Reflect-pad the two spatial axes of x [N,C,H,W] by p."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    out = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")
    key = (h, w, p)
    idx = _REFLECT_CACHE.get(key)
    if idx is None:
        src = np.arange(h * w).reshape(h, w)
        idx = np.pad(src, ((p, p), (p, p)), mode="reflect").reshape(-1)
        _REFLECT_CACHE[key] = idx

    def bwd(g):
        flat = g.reshape(n * c, -1)
        gx = np.zeros((n * c, h * w), g.dtype)
        np.add.at(gx, (slice(None), idx), flat)
        return (gx.reshape(x.shape),)

    return apply_op("pad_reflect", out, (x,), bwd)


_BOX_CACHE: dict[tuple, np.ndarray] = {}


def box_filter(x, window: int):
    """Per-channel local mean over a window x window box, reflect-padded
    so the output keeps the input shape."""
    x = as_tensor(x)
    c = x.shape[1]
    key = (c, window, x.data.dtype.str)
    k = _BOX_CACHE.get(key)
    if k is None:
        k = np.zeros((c, c, window, window), x.data.dtype)
        for i in range(c):
            k[i, i] = 1.0 / (window * window)
        _BOX_CACHE[key] = k
    padded = pad_reflect(x, window // 2)
    return conv2d(padded, Tensor(k), stride=1, padding=0)


def spatial_gradient(x):
    """Absolute forward differences along H and W, zero-padded trailing.

    Returns (grad_y, grad_x), each the same shape as x.  A 1-pixel axis
    yields an all-zero map.
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h >= 2:
        dy = absolute(getitem(x, (slice(None), slice(None), slice(1, None))) -
                      getitem(x, (slice(None), slice(None), slice(0, -1))))
        gy = pad_zero(dy, ((0, 0), (0, 0), (0, 1), (0, 0)))
    else:
        gy = Tensor(np.zeros_like(x.data))
    if w >= 2:
        dx = absolute(
            getitem(x, (slice(None), slice(None), slice(None), slice(1, None)))
            - getitem(x, (slice(None), slice(None), slice(None), slice(0, -1)))
        )
        gx = pad_zero(dx, ((0, 0), (0, 0), (0, 0), (0, 1)))
    else:
        gx = Tensor(np.zeros_like(x.data))
    return gy, gx


def gradient_magnitude(x):
    """Channel-mean of |dy| + |dx|; the smoothness-weighting map."""
    gy, gx = spatial_gradient(x)
    return tmean(gy + gx, axis=1, keepdims=True)
