"""Backend kernels against loop oracles, and compiled/numpy parity."""

import numpy as np
import pytest

from selfdepth.kernels import compiled_backend, numpy_backend
from oracles import bilinear_loops, conv2d_loops, finite_difference

BACKENDS = [numpy_backend] + ([compiled_backend] if compiled_backend else [])


def _ids(backend):
    return backend.NAME


@pytest.mark.parametrize("backend", BACKENDS, ids=_ids)
@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_conv2d_forward_matches_loops(backend, stride, pad):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((2, 3, 9, 8)).astype(np.float64)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float64)
    got = backend.conv2d_forward(x, w, stride, pad)
    want = conv2d_loops(x, w, stride, pad)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=_ids)
@pytest.mark.parametrize("stride,pad", [(1, 1), (2, 1), (2, 0)])
def test_conv2d_backward_matches_finite_difference(backend, stride, pad):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 2, 6, 5)).astype(np.float64)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float64)
    gy = rng.standard_normal(backend.conv2d_forward(x, w, stride, pad).shape)

    def f_x(xv, wv):
        return float((backend.conv2d_forward(xv, wv, stride, pad) * gy).sum())

    gx = backend.conv2d_backward_input(gy, w, stride, pad, x.shape[2], x.shape[3])
    gw = backend.conv2d_backward_kernel(gy, x, stride, pad, 3, 3)
    np.testing.assert_allclose(gx, finite_difference(f_x, [x, w], 0), atol=1e-6)
    np.testing.assert_allclose(gw, finite_difference(f_x, [x, w], 1), atol=1e-6)


@pytest.mark.parametrize("backend", BACKENDS, ids=_ids)
def test_bilinear_forward_matches_loops(backend):
    rng = np.random.default_rng(11)
    src = rng.standard_normal((1, 3, 6, 6)).astype(np.float64)
    cx = rng.uniform(-1.5, 6.5, (1, 5, 4))
    cy = rng.uniform(-1.5, 6.5, (1, 5, 4))
    got = backend.bilinear_sample_forward(src, cx, cy)
    np.testing.assert_allclose(got, bilinear_loops(src, cx, cy), rtol=0, atol=1e-12)


@pytest.mark.parametrize("backend", BACKENDS, ids=_ids)
def test_bilinear_backward_matches_finite_difference(backend):
    rng = np.random.default_rng(5)
    src = rng.standard_normal((1, 2, 6, 6)).astype(np.float64)
    # keep coords off cell boundaries so the FD step stays in one cell
    cx = rng.uniform(0.3, 4.6, (1, 4, 4)).round(1) + 0.05
    cy = rng.uniform(0.3, 4.6, (1, 4, 4)).round(1) + 0.05
    gy = rng.standard_normal((1, 2, 4, 4))

    def f(s, x, y):
        return float((backend.bilinear_sample_forward(s, x, y) * gy).sum())

    gsrc, gcx, gcy = backend.bilinear_sample_backward(gy, src, cx, cy)
    np.testing.assert_allclose(gsrc, finite_difference(f, [src, cx, cy], 0), atol=1e-6)
    np.testing.assert_allclose(gcx, finite_difference(f, [src, cx, cy], 1), atol=1e-6)
    np.testing.assert_allclose(gcy, finite_difference(f, [src, cx, cy], 2), atol=1e-6)


@pytest.mark.skipif(compiled_backend is None, reason="compiled backend unavailable")
@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_backend_parity(dtype):
    rng = np.random.default_rng(13)
    x = rng.standard_normal((2, 4, 12, 10)).astype(dtype)
    w = rng.standard_normal((5, 4, 3, 3)).astype(dtype)
    tol = 1e-5 if dtype == np.float32 else 1e-12
    for stride, pad in [(1, 1), (2, 1)]:
        a = numpy_backend.conv2d_forward(x, w, stride, pad)
        b = compiled_backend.conv2d_forward(x, w, stride, pad)
        np.testing.assert_allclose(a, b, rtol=tol, atol=tol)
        gy = rng.standard_normal(a.shape).astype(dtype)
        np.testing.assert_allclose(
            numpy_backend.conv2d_backward_input(gy, w, stride, pad, 12, 10),
            compiled_backend.conv2d_backward_input(gy, w, stride, pad, 12, 10),
            rtol=tol,
            atol=tol,
        )
        np.testing.assert_allclose(
            numpy_backend.conv2d_backward_kernel(gy, x, stride, pad, 3, 3),
            compiled_backend.conv2d_backward_kernel(gy, x, stride, pad, 3, 3),
            rtol=tol,
            atol=tol,
        )
    src = rng.standard_normal((1, 3, 8, 8)).astype(dtype)
    cx = rng.uniform(-1, 8, (1, 6, 6)).astype(dtype)
    cy = rng.uniform(-1, 8, (1, 6, 6)).astype(dtype)
    np.testing.assert_allclose(
        numpy_backend.bilinear_sample_forward(src, cx, cy),
        compiled_backend.bilinear_sample_forward(src, cx, cy),
        rtol=tol,
        atol=tol,
    )
    gy = rng.standard_normal((1, 3, 6, 6)).astype(dtype)
    for a, b in zip(
        numpy_backend.bilinear_sample_backward(gy, src, cx, cy),
        compiled_backend.bilinear_sample_backward(gy, src, cx, cy),
    ):
        np.testing.assert_allclose(a, b, rtol=tol, atol=tol)


def test_conv2d_determinism():
    from selfdepth import kernels

    rng = np.random.default_rng(1)
    x = rng.standard_normal((1, 8, 16, 16)).astype(np.float32)
    w = rng.standard_normal((8, 8, 3, 3)).astype(np.float32)
    a = kernels.conv2d_forward(x, w, 1, 1)
    b = kernels.conv2d_forward(x, w, 1, 1)
    assert a.tobytes() == b.tobytes()
