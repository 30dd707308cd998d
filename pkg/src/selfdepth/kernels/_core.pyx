# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: 2-D convolution and bilinear grid sampling.

Single-threaded with fixed loop order so results are bitwise
reproducible run to run.  Mirrors ``numpy_backend`` exactly in
signatures and semantics.
"""

import numpy as np

cimport cython
from libc.math cimport floor

ctypedef fused real:
    float
    double

NAME = "compiled"


def conv2d_forward(x, w, int stride, int pad):
    x = np.ascontiguousarray(x)
    w = np.ascontiguousarray(w)
    cdef int ho = (x.shape[2] + 2 * pad - w.shape[2]) // stride + 1
    cdef int wo = (x.shape[3] + 2 * pad - w.shape[3]) // stride + 1
    y = np.zeros((x.shape[0], w.shape[0], ho, wo), dtype=x.dtype)
    if x.dtype == np.float32:
        _conv_fwd[float](x, w, y, stride, pad)
    else:
        _conv_fwd[double](x, w, y, stride, pad)
    return y


cdef void _conv_fwd(real[:, :, :, ::1] x, real[:, :, :, ::1] w,
                    real[:, :, :, ::1] y, int stride, int pad) noexcept:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wi = x.shape[3]
    cdef Py_ssize_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = y.shape[2], wo = y.shape[3]
    cdef Py_ssize_t b, o, ci, i, j, yo, xo, yi, xi
    cdef real acc
    for b in range(n):
        for o in range(k):
            for yo in range(ho):
                for xo in range(wo):
                    acc = 0
                    for ci in range(c):
                        for i in range(kh):
                            yi = yo * stride + i - pad
                            if yi < 0 or yi >= h:
                                continue
                            for j in range(kw):
                                xi = xo * stride + j - pad
                                if xi < 0 or xi >= wi:
                                    continue
                                acc = acc + x[b, ci, yi, xi] * w[o, ci, i, j]
                    y[b, o, yo, xo] = acc


def conv2d_backward_kernel(gy, x, int stride, int pad, int kh, int kw):
    gy = np.ascontiguousarray(gy)
    x = np.ascontiguousarray(x)
    gw = np.zeros((gy.shape[1], x.shape[1], kh, kw), dtype=x.dtype)
    if x.dtype == np.float32:
        _conv_bwd_kernel[float](gy, x, gw, stride, pad)
    else:
        _conv_bwd_kernel[double](gy, x, gw, stride, pad)
    return gw


cdef void _conv_bwd_kernel(real[:, :, :, ::1] gy, real[:, :, :, ::1] x,
                           real[:, :, :, ::1] gw, int stride, int pad) noexcept:
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], wi = x.shape[3]
    cdef Py_ssize_t k = gw.shape[0], kh = gw.shape[2], kw = gw.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t b, o, ci, i, j, yo, xo, yi, xi
    cdef real acc
    for o in range(k):
        for ci in range(c):
            for i in range(kh):
                for j in range(kw):
                    acc = 0
                    for b in range(n):
                        for yo in range(ho):
                            yi = yo * stride + i - pad
                            if yi < 0 or yi >= h:
                                continue
                            for xo in range(wo):
                                xi = xo * stride + j - pad
                                if xi < 0 or xi >= wi:
                                    continue
                                acc = acc + gy[b, o, yo, xo] * x[b, ci, yi, xi]
                    gw[o, ci, i, j] = acc


def conv2d_backward_input(gy, w, int stride, int pad, int h, int w_in):
    gy = np.ascontiguousarray(gy)
    w = np.ascontiguousarray(w)
    gx = np.zeros((gy.shape[0], w.shape[1], h, w_in), dtype=gy.dtype)
    if gy.dtype == np.float32:
        _conv_bwd_input[float](gy, w, gx, stride, pad)
    else:
        _conv_bwd_input[double](gy, w, gx, stride, pad)
    return gx


cdef void _conv_bwd_input(real[:, :, :, ::1] gy, real[:, :, :, ::1] w,
                          real[:, :, :, ::1] gx, int stride, int pad) noexcept:
    cdef Py_ssize_t n = gx.shape[0], c = gx.shape[1], h = gx.shape[2], wi = gx.shape[3]
    cdef Py_ssize_t k = w.shape[0], kh = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t ho = gy.shape[2], wo = gy.shape[3]
    cdef Py_ssize_t b, o, ci, i, j, yo, xo, yi, xi
    for b in range(n):
        for o in range(k):
            for yo in range(ho):
                for xo in range(wo):
                    for ci in range(c):
                        for i in range(kh):
                            yi = yo * stride + i - pad
                            if yi < 0 or yi >= h:
                                continue
                            for j in range(kw):
                                xi = xo * stride + j - pad
                                if xi < 0 or xi >= wi:
                                    continue
                                gx[b, ci, yi, xi] = gx[b, ci, yi, xi] + gy[b, o, yo, xo] * w[o, ci, i, j]


def bilinear_sample_forward(src, cx, cy):
    src = np.ascontiguousarray(src)
    cx = np.ascontiguousarray(cx)
    cy = np.ascontiguousarray(cy)
    out = np.zeros((src.shape[0], src.shape[1], cx.shape[1], cx.shape[2]), dtype=src.dtype)
    if src.dtype == np.float32:
        _bilin_fwd[float](src, cx, cy, out)
    else:
        _bilin_fwd[double](src, cx, cy, out)
    return out


cdef void _bilin_fwd(real[:, :, :, ::1] src, real[:, :, ::1] cx,
                     real[:, :, ::1] cy, real[:, :, :, ::1] out) noexcept:
    cdef Py_ssize_t n = src.shape[0], c = src.shape[1], h = src.shape[2], w = src.shape[3]
    cdef Py_ssize_t hc = cx.shape[1], wc = cx.shape[2]
    cdef Py_ssize_t b, ci, yo, xo
    cdef long x0, y0, x1, y1
    cdef real xf, yf, fx, fy, w00, w01, w10, w11, acc
    for b in range(n):
        for yo in range(hc):
            for xo in range(wc):
                xf = cx[b, yo, xo]
                yf = cy[b, yo, xo]
                x0 = <long>floor(xf)
                y0 = <long>floor(yf)
                x1 = x0 + 1
                y1 = y0 + 1
                fx = xf - x0
                fy = yf - y0
                w00 = (1 - fx) * (1 - fy)
                w01 = fx * (1 - fy)
                w10 = (1 - fx) * fy
                w11 = fx * fy
                for ci in range(c):
                    acc = 0
                    if 0 <= y0 < h and 0 <= x0 < w:
                        acc = acc + w00 * src[b, ci, y0, x0]
                    if 0 <= y0 < h and 0 <= x1 < w:
                        acc = acc + w01 * src[b, ci, y0, x1]
                    if 0 <= y1 < h and 0 <= x0 < w:
                        acc = acc + w10 * src[b, ci, y1, x0]
                    if 0 <= y1 < h and 0 <= x1 < w:
                        acc = acc + w11 * src[b, ci, y1, x1]
                    out[b, ci, yo, xo] = acc


def bilinear_sample_backward(gy, src, cx, cy):
    gy = np.ascontiguousarray(gy)
    src = np.ascontiguousarray(src)
    cx = np.ascontiguousarray(cx)
    cy = np.ascontiguousarray(cy)
    gsrc = np.zeros_like(src)
    gcx = np.zeros_like(cx)
    gcy = np.zeros_like(cy)
    if src.dtype == np.float32:
        _bilin_bwd[float](gy, src, cx, cy, gsrc, gcx, gcy)
    else:
        _bilin_bwd[double](gy, src, cx, cy, gsrc, gcx, gcy)
    return gsrc, gcx, gcy


cdef void _bilin_bwd(real[:, :, :, ::1] gy, real[:, :, :, ::1] src,
                     real[:, :, ::1] cx, real[:, :, ::1] cy,
                     real[:, :, :, ::1] gsrc, real[:, :, ::1] gcx,
                     real[:, :, ::1] gcy) noexcept:
    cdef Py_ssize_t n = src.shape[0], c = src.shape[1], h = src.shape[2], w = src.shape[3]
    cdef Py_ssize_t hc = cx.shape[1], wc = cx.shape[2]
    cdef Py_ssize_t b, ci, yo, xo
    cdef long x0, y0, x1, y1
    cdef bint ok00, ok01, ok10, ok11
    cdef real xf, yf, fx, fy, g, v00, v01, v10, v11, gx_acc, gy_acc
    for b in range(n):
        for yo in range(hc):
            for xo in range(wc):
                xf = cx[b, yo, xo]
                yf = cy[b, yo, xo]
                x0 = <long>floor(xf)
                y0 = <long>floor(yf)
                x1 = x0 + 1
                y1 = y0 + 1
                fx = xf - x0
                fy = yf - y0
                ok00 = 0 <= y0 < h and 0 <= x0 < w
                ok01 = 0 <= y0 < h and 0 <= x1 < w
                ok10 = 0 <= y1 < h and 0 <= x0 < w
                ok11 = 0 <= y1 < h and 0 <= x1 < w
                gx_acc = 0
                gy_acc = 0
                for ci in range(c):
                    g = gy[b, ci, yo, xo]
                    v00 = src[b, ci, y0, x0] if ok00 else 0
                    v01 = src[b, ci, y0, x1] if ok01 else 0
                    v10 = src[b, ci, y1, x0] if ok10 else 0
                    v11 = src[b, ci, y1, x1] if ok11 else 0
                    if ok00:
                        gsrc[b, ci, y0, x0] = gsrc[b, ci, y0, x0] + g * (1 - fx) * (1 - fy)
                    if ok01:
                        gsrc[b, ci, y0, x1] = gsrc[b, ci, y0, x1] + g * fx * (1 - fy)
                    if ok10:
                        gsrc[b, ci, y1, x0] = gsrc[b, ci, y1, x0] + g * (1 - fx) * fy
                    if ok11:
                        gsrc[b, ci, y1, x1] = gsrc[b, ci, y1, x1] + g * fx * fy
                    gx_acc = gx_acc + g * (-(1 - fy) * v00 + (1 - fy) * v01 - fy * v10 + fy * v11)
                    gy_acc = gy_acc + g * (-(1 - fx) * v00 - fx * v01 + (1 - fx) * v10 + fx * v11)
                gcx[b, yo, xo] = gx_acc
                gcy[b, yo, xo] = gy_acc
