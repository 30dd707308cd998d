"""Pure-numpy implementations of the hot kernels.

Same contracts as the compiled backend in ``_core.pyx``; used as the
fallback when the extension is unavailable (or forced via
``SELFDEPTH_BACKEND=numpy``).  Convolutions go through im2col + BLAS
matmul; the input-gradient path uses the transposed-convolution
identity (zero-dilated output gradient correlated with the flipped
kernel) so no scatter-add is needed there.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def _im2col(x, kh, kw, stride, pad):
    # x: [N,C,H,W] -> cols [N*Ho*Wo, C*kh*kw]
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # win: [N, C, Ho, Wo, kh, kw]
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c * kh * kw
    )
    return cols, ho, wo


def conv2d_forward(x, w, stride, pad):
    n = x.shape[0]
    k, _, kh, kw = w.shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    y = cols @ w.reshape(k, -1).T
    return np.ascontiguousarray(y.reshape(n, ho, wo, k).transpose(0, 3, 1, 2))


def conv2d_backward_kernel(gy, x, stride, pad, kh, kw):
    k = gy.shape[1]
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    gy_mat = gy.transpose(0, 2, 3, 1).reshape(-1, k)
    return (gy_mat.T @ cols).reshape(k, x.shape[1], kh, kw)


def conv2d_backward_input(gy, w, stride, pad, h, w_in):
    # grad wrt input == correlation of the zero-dilated gy with the
    # spatially flipped, channel-swapped kernel.
    n, k, ho, wo = gy.shape
    _, c, kh, kw = w.shape
    if stride > 1:
        dil = np.zeros((n, k, (ho - 1) * stride + 1, (wo - 1) * stride + 1), gy.dtype)
        dil[:, :, ::stride, ::stride] = gy
    else:
        dil = gy
    # trailing rows/cols lost to floor() in the forward output size
    extra_h = h + 2 * pad - kh - (ho - 1) * stride
    extra_w = w_in + 2 * pad - kw - (wo - 1) * stride
    if extra_h or extra_w:
        dil = np.pad(dil, ((0, 0), (0, 0), (0, extra_h), (0, extra_w)))
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    gx = conv2d_forward(dil, w_flip, 1, max(kh, kw) - 1)
    if pad:
        gx = gx[:, :, pad : pad + h, pad : pad + w_in]
    return np.ascontiguousarray(gx)


def _corner_terms(src, cx, cy):
    n, c, h, w = src.shape
    x0 = np.floor(cx).astype(np.int64)
    y0 = np.floor(cy).astype(np.int64)
    fx = cx - x0
    fy = cy - y0
    corners = []
    for dy, dx, wgt in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xi = x0 + dx
        yi = y0 + dy
        ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        corners.append((np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1), wgt, ok))
    return corners, fx, fy, x0, y0


def bilinear_sample_forward(src, cx, cy):
    """Sample src [N,C,H,W] at pixel coords cx, cy [N,Hc,Wc]; zero outside."""
    n, c, h, w = src.shape
    corners, _, _, _, _ = _corner_terms(src, cx, cy)
    out = np.zeros((n, c, cx.shape[1], cx.shape[2]), src.dtype)
    bi = np.arange(n)[:, None, None]
    for yi, xi, wgt, ok in corners:
        vals = src[bi, :, yi, xi]  # [N,Hc,Wc,C]
        out += (vals * (wgt * ok)[..., None]).transpose(0, 3, 1, 2)
    return out


def bilinear_sample_backward(gy, src, cx, cy):
    n, c, h, w = src.shape
    corners, fx, fy, _, _ = _corner_terms(src, cx, cy)
    gsrc_nhwc = np.zeros((n, h, w, c), src.dtype)
    gcx = np.zeros_like(cx)
    gcy = np.zeros_like(cy)
    bi = np.arange(n)[:, None, None]
    bflat = np.broadcast_to(bi, cx.shape)
    # d(weight)/d(cx), d(weight)/d(cy) per corner, in corner order
    dwx = [-(1 - fy), (1 - fy), -fy, fy]
    dwy = [-(1 - fx), -fx, (1 - fx), fx]
    for (yi, xi, wgt, ok), dx_, dy_ in zip(corners, dwx, dwy):
        g_corner = gy * (wgt * ok)[:, None]  # [N,C,Hc,Wc]
        flat = (bflat * h + yi) * w + xi
        np.add.at(
            gsrc_nhwc.reshape(n * h * w, c),
            flat.reshape(-1),
            g_corner.transpose(0, 2, 3, 1).reshape(-1, c),
        )
        vals = src[bi, :, yi, xi].transpose(0, 3, 1, 2)  # [N,C,Hc,Wc]
        contrib = (gy * vals).sum(axis=1) * ok
        gcx += contrib * dx_
        gcy += contrib * dy_
    return np.ascontiguousarray(gsrc_nhwc.transpose(0, 3, 1, 2)), gcx, gcy
