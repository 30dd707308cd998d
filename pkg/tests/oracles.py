"""Independent slow-path oracles used to freeze expected values.

Everything here is deliberately written as plain loops / direct formula
transcriptions, sharing no code with the package under test.
"""

import math

import numpy as np


def conv2d_loops(x, w, stride=1, pad=0):
    n, c, h, wi = x.shape
    k, _, kh, kw = w.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wi + 2 * pad - kw) // stride + 1
    out = np.zeros((n, k, ho, wo), dtype=np.float64)
    for b in range(n):
        for o in range(k):
            for yo in range(ho):
                for xo in range(wo):
                    acc = 0.0
                    for ci in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                yi = yo * stride + i - pad
                                xi = xo * stride + j - pad
                                if 0 <= yi < h and 0 <= xi < wi:
                                    acc += float(x[b, ci, yi, xi]) * float(w[o, ci, i, j])
                    out[b, o, yo, xo] = acc
    return out


def bilinear_loops(src, cx, cy):
    n, c, h, w = src.shape
    hc, wc = cx.shape[1], cx.shape[2]
    out = np.zeros((n, c, hc, wc), dtype=np.float64)
    for b in range(n):
        for yo in range(hc):
            for xo in range(wc):
                x = float(cx[b, yo, xo])
                y = float(cy[b, yo, xo])
                x0, y0 = math.floor(x), math.floor(y)
                fx, fy = x - x0, y - y0
                for ci in range(c):
                    acc = 0.0
                    for dy, dx, wt in (
                        (0, 0, (1 - fx) * (1 - fy)),
                        (0, 1, fx * (1 - fy)),
                        (1, 0, (1 - fx) * fy),
                        (1, 1, fx * fy),
                    ):
                        yy, xx = y0 + dy, x0 + dx
                        if 0 <= yy < h and 0 <= xx < w:
                            acc += wt * float(src[b, ci, yy, xx])
                    out[b, ci, yo, xo] = acc
    return out


def spatial_gradient_loops(x):
    n, c, h, w = x.shape
    gy = np.zeros_like(x, dtype=np.float64)
    gx = np.zeros_like(x, dtype=np.float64)
    for b in range(n):
        for ci in range(c):
            for i in range(h - 1):
                for j in range(w):
                    gy[b, ci, i, j] = abs(float(x[b, ci, i + 1, j]) - float(x[b, ci, i, j]))
            for i in range(h):
                for j in range(w - 1):
                    gx[b, ci, i, j] = abs(float(x[b, ci, i, j + 1]) - float(x[b, ci, i, j]))
    return gy, gx


def ssim_window_loops(a, b, window=3, c1=0.01**2, c2=0.03**2):
    """Per-pixel SSIM with reflect-padded box windows, channel-averaged."""
    n, c, h, w = a.shape
    p = window // 2
    ap = np.pad(a.astype(np.float64), ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")
    bp = np.pad(b.astype(np.float64), ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")
    out = np.zeros((n, 1, h, w))
    for bi in range(n):
        for i in range(h):
            for j in range(w):
                acc = 0.0
                for ci in range(c):
                    wa = ap[bi, ci, i : i + window, j : j + window]
                    wb = bp[bi, ci, i : i + window, j : j + window]
                    mu_a, mu_b = wa.mean(), wb.mean()
                    var_a = (wa * wa).mean() - mu_a**2
                    var_b = (wb * wb).mean() - mu_b**2
                    cov = (wa * wb).mean() - mu_a * mu_b
                    acc += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
                    )
                out[bi, 0, i, j] = acc / c
    return out


def gram_loops(f):
    c, m = f.shape
    g = np.zeros((c, c), dtype=np.float64)
    for i in range(c):
        for j in range(c):
            acc = 0.0
            for k in range(m):
                acc += float(f[i, k]) * float(f[j, k])
            g[i, j] = acc / m
    return g


def cosine_loops(u, v, eps=1e-8):
    nu = math.sqrt(sum(float(x) * float(x) for x in u))
    nv = math.sqrt(sum(float(x) * float(x) for x in v))
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    return dot / (max(nu, eps) * max(nv, eps))


def metrics_loops(pred, gt):
    """Supplementary-metric transcription, including the log(x+1) RMSE."""
    n = len(pred)
    abs_rel = sum(abs(p - g) / g for p, g in zip(pred, gt)) / n
    sq_rel = sum((p - g) ** 2 / g for p, g in zip(pred, gt)) / n
    rmse = math.sqrt(sum((p - g) ** 2 for p, g in zip(pred, gt)) / n)
    rmse_log = math.sqrt(
        sum((math.log(p + 1.0) - math.log(g + 1.0)) ** 2 for p, g in zip(pred, gt)) / n
    )
    deltas = []
    for r in (1, 2, 3):
        thr = 1.25**r
        deltas.append(sum(1.0 for p, g in zip(pred, gt) if max(g / p, p / g) < thr) / n)
    return abs_rel, sq_rel, rmse, rmse_log, deltas[0], deltas[1], deltas[2]


def finite_difference(f, arrays, index, h=1e-4):
    """Central-difference gradient of scalar f w.r.t. arrays[index]."""
    base = [a.copy() for a in arrays]
    grad = np.zeros_like(base[index])
    flat = grad.reshape(-1)
    target = base[index].reshape(-1)
    for i in range(target.size):
        orig = target[i]
        target[i] = orig + h
        fp = f(*base)
        target[i] = orig - h
        fm = f(*base)
        target[i] = orig
        flat[i] = (fp - fm) / (2 * h)
    return grad
