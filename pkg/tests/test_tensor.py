"""Autodiff engine: op semantics, tape behavior, stop-gradient, serialization."""

import numpy as np
import pytest

import selfdepth.tensor as T
from selfdepth.errors import ContractError, NonFiniteError, ShapeError
from oracles import conv2d_loops, finite_difference, spatial_gradient_loops


def test_elementwise_add():
    out = T.elementwise("add", T.Tensor([1.0, 2.0]), T.Tensor([3.0, 4.0]))
    np.testing.assert_allclose(out.data, [4.0, 6.0])


def test_elementwise_max_with_scalar():
    out = T.elementwise("max-with-scalar", T.Tensor([0.1, 0.5]), 0.2)
    np.testing.assert_allclose(out.data, [0.2, 0.5])


def test_elementwise_broadcast_shapes():
    rng = np.random.default_rng(0)
    a = T.Tensor(rng.standard_normal((1, 3, 1)))
    b = T.Tensor(rng.standard_normal((2, 3, 4)))
    assert T.mul(a, b).shape == (2, 3, 4)


def test_elementwise_unknown_kind_rejected():
    with pytest.raises(ContractError):
        T.elementwise("modulo", T.Tensor([1.0]), T.Tensor([2.0]))


def test_shape_mismatch_raises():
    with pytest.raises(ShapeError):
        T.add(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((4, 5))))


def test_broadcast_sum_identity_against_loops():
    # sum(a+b) over the broadcast grid equals the loop-expanded total
    rng = np.random.default_rng(42)
    a = rng.standard_normal((1, 4))
    b = rng.standard_normal((3, 1))
    got = T.tsum(T.add(T.Tensor(a, dtype=np.float64), T.Tensor(b, dtype=np.float64)))
    want = sum(a[0, j] + b[i, 0] for i in range(3) for j in range(4))
    np.testing.assert_allclose(got.data, want, rtol=1e-12)


def test_conv2d_ones_sum():
    x = T.Tensor(np.ones((1, 1, 3, 3)))
    w = T.Tensor(np.ones((1, 1, 3, 3)))
    out = T.conv2d(x, w)
    np.testing.assert_allclose(out.data, [[[[9.0]]]])


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(1)
    x = T.Tensor(rng.standard_normal((1, 1, 5, 5)))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    out = T.conv2d(x, T.Tensor(k), padding=1)
    np.testing.assert_allclose(out.data, x.data, rtol=1e-6)


def test_conv2d_ramp_average_matches_loops():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    w = np.full((1, 1, 2, 2), 0.25)
    out = T.conv2d(T.Tensor(x, dtype=np.float64), T.Tensor(w, dtype=np.float64))
    np.testing.assert_allclose(out.data, conv2d_loops(x, w), rtol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(ShapeError):
        T.conv2d(T.Tensor(np.zeros((1, 2, 4, 4))), T.Tensor(np.zeros((1, 3, 3, 3))))


def test_spatial_gradient_constant_zero():
    gy, gx = T.spatial_gradient(T.Tensor(np.full((1, 1, 4, 4), 0.7)))
    assert not gy.data.any() and not gx.data.any()


def test_spatial_gradient_ramp():
    x = np.tile(np.arange(4.0), (3, 1))[None, None]
    gy, gx = T.spatial_gradient(T.Tensor(x))
    np.testing.assert_allclose(gx.data[0, 0, :, :3], 1.0)
    np.testing.assert_allclose(gx.data[0, 0, :, 3], 0.0)
    np.testing.assert_allclose(gy.data, 0.0)


def test_spatial_gradient_matches_loops():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((1, 2, 5, 5))
    gy, gx = T.spatial_gradient(T.Tensor(x, dtype=np.float64))
    oy, ox = spatial_gradient_loops(x)
    np.testing.assert_allclose(gy.data, oy, rtol=1e-12)
    np.testing.assert_allclose(gx.data, ox, rtol=1e-12)


def test_spatial_gradient_single_pixel_axis():
    gy, gx = T.spatial_gradient(T.Tensor(np.ones((1, 1, 1, 4))))
    assert not gy.data.any()


def test_backward_square():
    x = T.Tensor(3.0, requires_grad=True, dtype=np.float64)
    with T.Tape() as tape:
        loss = T.mul(x, x)
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, 6.0)


def test_backward_stop_gradient_contract():
    rng = np.random.default_rng(2)
    x = T.Tensor(rng.standard_normal(4), requires_grad=True, dtype=np.float64)
    y = T.Tensor(rng.standard_normal(4), requires_grad=True, dtype=np.float64)
    with T.Tape() as tape:
        loss = T.tsum(T.mul(T.stop_gradient(x), y))
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, np.zeros(4))
    np.testing.assert_allclose(y.grad, x.data)


def test_stop_gradient_forward_bit_exact():
    x = T.Tensor(np.random.default_rng(3).standard_normal((2, 3)))
    assert T.stop_gradient(x).data.tobytes() == x.data.tobytes()


def test_backward_non_scalar_rejected():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with T.Tape() as tape:
        y = T.mul(x, x)
        with pytest.raises(ContractError):
            tape.backward(y)


def test_backward_non_finite_names_op():
    x = T.Tensor(0.0, requires_grad=True)
    with T.Tape() as tape, np.errstate(divide="ignore", invalid="ignore"):
        y = T.log(x)  # -inf
        z = T.mul(y, 0.0)  # nan
        with pytest.raises(NonFiniteError, match="log"):
            tape.backward(z)


def test_tape_replay_deterministic():
    rng = np.random.default_rng(4)
    x = T.Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    with T.Tape() as tape:
        loss = T.tsum(T.mul(T.exp(x), T.sigmoid(x)))
        tape.backward(loss)
        first = x.grad.copy()
        tape.backward(loss)
    assert first.tobytes() == x.grad.tobytes()


def test_pause_recording_blocks_grads():
    x = T.Tensor(np.ones(3), requires_grad=True)
    with T.Tape() as tape:
        with T.pause_recording():
            y = T.mul(x, 2.0)
        assert not y.requires_grad
        loss = T.tsum(T.mul(x, x))
        tape.backward(loss)
    np.testing.assert_allclose(x.grad, 2.0 * x.data)


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_op_mixture(seed):
    """Central-difference agreement at 64-bit over 20 seeds."""
    rng = np.random.default_rng(seed)
    a0 = np.abs(rng.standard_normal((2, 3))) + 0.5  # keep log/sqrt domains safe
    b0 = rng.standard_normal((2, 3)) * 0.5 + 1.5

    def run(a_arr, b_arr):
        a = T.Tensor(a_arr, requires_grad=True, dtype=np.float64)
        b = T.Tensor(b_arr, requires_grad=True, dtype=np.float64)
        with T.Tape() as tape:
            mix = T.add(
                T.mul(T.log(a), T.sigmoid(b)),
                T.div(T.sqrt(a), T.exp(T.mul(b, 0.3))),
            )
            mix = T.add(mix, T.maximum_scalar(T.sub(a, b), 0.1))
            loss = T.tmean(T.mul(mix, mix))
            tape.backward(loss)
        return loss, a, b

    loss, a, b = run(a0, b0)

    def f(a_arr, b_arr):
        l, _, _ = run(a_arr, b_arr)
        return float(l.data)

    for idx, grad in ((0, a.grad), (1, b.grad)):
        fd = finite_difference(f, [a0, b0], idx)
        denom = max(1.0, np.abs(grad).max(), np.abs(fd).max())
        assert np.abs(grad - fd).max() / denom < 1e-5


def test_grid_sample_midpoint():
    src = np.zeros((1, 1, 1, 2))
    src[0, 0, 0, 1] = 1.0
    coords = np.zeros((1, 2, 1, 1))
    coords[0, 0] = 0.5
    out = T.grid_sample(T.Tensor(src), T.Tensor(coords))
    np.testing.assert_allclose(out.data, 0.5)


def test_bilinear_resize_identity_and_corners():
    rng = np.random.default_rng(6)
    x = rng.standard_normal((1, 1, 4, 4))
    up = T.bilinear_resize(T.Tensor(x, dtype=np.float64), (7, 7))
    # align-corners: the four corners are preserved exactly
    np.testing.assert_allclose(up.data[0, 0, 0, 0], x[0, 0, 0, 0])
    np.testing.assert_allclose(up.data[0, 0, -1, -1], x[0, 0, -1, -1])
    same = T.bilinear_resize(T.Tensor(x), (4, 4))
    np.testing.assert_allclose(same.data, x)


def test_box_filter_constant_preserved():
    x = T.Tensor(np.full((1, 3, 5, 5), 0.4))
    out = T.box_filter(x, 3)
    np.testing.assert_allclose(out.data, 0.4, rtol=1e-6)


def test_pfm_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    arr = rng.standard_normal((6, 4)).astype(np.float32)
    path = tmp_path / "map.pfm"
    T.write_pfm(path, arr)
    np.testing.assert_array_equal(T.read_pfm(path), arr)


def test_scnt_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    arr = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    path = tmp_path / "t.scnt"
    T.write_scnt(path, arr)
    np.testing.assert_array_equal(T.read_scnt(path), arr)
    with open(path, "rb") as f:
        assert f.read(4) == b"SCNT"


def test_matmul_gradients():
    rng = np.random.default_rng(10)
    a0 = rng.standard_normal((3, 4))
    b0 = rng.standard_normal((4, 2))
    a = T.Tensor(a0, requires_grad=True, dtype=np.float64)
    b = T.Tensor(b0, requires_grad=True, dtype=np.float64)
    with T.Tape() as tape:
        loss = T.tsum(T.power(T.matmul(a, b), 2.0))
        tape.backward(loss)

    def f(av, bv):
        return float((np.asarray(av @ bv) ** 2).sum())

    np.testing.assert_allclose(a.grad, finite_difference(f, [a0, b0], 0), atol=1e-6)
    np.testing.assert_allclose(b.grad, finite_difference(f, [a0, b0], 1), atol=1e-6)


def test_concat_getitem_gradients():
    rng = np.random.default_rng(11)
    a = T.Tensor(rng.standard_normal((2, 3)), requires_grad=True, dtype=np.float64)
    b = T.Tensor(rng.standard_normal((2, 3)), requires_grad=True, dtype=np.float64)
    with T.Tape() as tape:
        cat = T.concat([a, b], axis=0)
        piece = T.getitem(cat, (slice(1, 3), slice(None)))
        loss = T.tsum(T.mul(piece, piece))
        tape.backward(loss)
    want_a = np.zeros((2, 3))
    want_a[1] = 2 * a.data[1]
    np.testing.assert_allclose(a.grad, want_a)
    np.testing.assert_allclose(b.grad, 2 * b.data * [[1], [0]])
