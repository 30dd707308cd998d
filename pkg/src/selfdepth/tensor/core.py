"""Dense n-d tensors with reverse-mode automatic differentiation.

The engine is deliberately small: tensors wrap numpy arrays, and every
differentiable operation executed inside an active :class:`Tape` context
appends one node (inputs, output, backward closure) to the tape in
execution order.  ``Tape.backward`` walks the node list strictly in
reverse, accumulating gradients.  Values produced by
:func:`stop_gradient` participate in forward computation bit-for-bit but
contribute exactly zero gradient upstream.

Precision is float32 by default; float64 exists for finite-difference
gradient checking (see :mod:`selfdepth.gradcheck`).
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, NonFiniteError, ShapeError

_DEFAULT_DTYPE = np.float32
_TAPE_STACK: list["Tape"] = []
_PAUSE_DEPTH = 0


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"default dtype must be float32 or float64, got {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class Tensor:
    """A numpy-backed array that can participate in gradient tracing."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _not_scalar(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={list(self.shape)}, dtype={self.data.dtype.name}{flag})"

    # operator sugar; the functional forms live in this module and in ops.py
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)


def _not_scalar(t):
    raise ContractError(f"expected scalar tensor, got shape {list(t.shape)}")


class _Node:
    __slots__ = ("output", "inputs", "backward", "name")

    def __init__(self, output, inputs, backward, name):
        self.output = output
        self.inputs = inputs
        self.backward = backward
        self.name = name


class Tape:
    """Ordered record of differentiable ops; context manager."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def backward(self, loss: Tensor) -> None:
        """Populate ``.grad`` on every requires_grad tensor this tape saw.

        Reverse replay is strictly in inverse execution order.  Grads are
        assigned fresh on each call (not accumulated across calls), so
        replaying twice yields identical results.
        """
        if loss.data.size != 1:
            raise ContractError(
                f"backward requires a scalar loss, got shape {list(loss.shape)}"
            )
        if not np.isfinite(loss.data).all():
            raise NonFiniteError(self._first_nonfinite_message())
        grads: dict[int, np.ndarray] = {}
        tensors: dict[int, Tensor] = {}
        grads[id(loss)] = np.ones_like(loss.data)
        tensors[id(loss)] = loss
        for node in reversed(self.nodes):
            for t in node.inputs:
                tensors.setdefault(id(t), t)
            tensors.setdefault(id(node.output), node.output)
            g = grads.get(id(node.output))
            if g is None:
                continue
            for t, gt in zip(node.inputs, node.backward(g)):
                if gt is None or not t.requires_grad:
                    continue
                acc = grads.get(id(t))
                grads[id(t)] = gt if acc is None else acc + gt
        for key, t in tensors.items():
            if t.requires_grad:
                g = grads.get(key)
                t.grad = np.zeros_like(t.data) if g is None else g

    def _first_nonfinite_message(self) -> str:
        for node in self.nodes:
            if not np.isfinite(node.output.data).all():
                return f"loss is non-finite; first non-finite op on tape: {node.name}"
        return "loss is non-finite (no recorded op produced it)"


def backward(loss: Tensor) -> None:
    """Run backward on the innermost active tape."""
    if not _TAPE_STACK:
        raise ContractError("backward called with no active Tape")
    _TAPE_STACK[-1].backward(loss)


class pause_recording:
    """Context manager suspending tape recording (forward-only region)."""

    def __enter__(self):
        global _PAUSE_DEPTH
        _PAUSE_DEPTH += 1
        return self

    def __exit__(self, *exc):
        global _PAUSE_DEPTH
        _PAUSE_DEPTH -= 1
        return False


def _recording() -> Tape | None:
    if _PAUSE_DEPTH or not _TAPE_STACK:
        return None
    return _TAPE_STACK[-1]


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def apply_op(name, out_data, inputs, backward_fn) -> Tensor:
    """Wrap an op result, recording it on the active tape when traced."""
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    if requires:
        tape = _recording()
        if tape is not None:
            tape.nodes.append(_Node(out, tuple(inputs), backward_fn, name))
        else:
            out.requires_grad = False
    return out


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, name):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from e


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return apply_op(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    return apply_op(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return apply_op(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)),
    )


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "div")
    return apply_op(
        "div",
        a.data / b.data,
        (a, b),
        lambda g: (
            unbroadcast(g / b.data, a.shape),
            unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def power(a, p: float):
    a = as_tensor(a)
    p = float(p)
    out = a.data**p
    return apply_op(
        "power", out, (a,), lambda g: (g * p * a.data ** (p - 1.0),)
    )


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return apply_op("exp", out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return apply_op("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return apply_op("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


def sin(a):
    a = as_tensor(a)
    return apply_op("sin", np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),))


def cos(a):
    a = as_tensor(a)
    return apply_op("cos", np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),))


def absolute(a):
    # subgradient 0 at the origin
    a = as_tensor(a)
    return apply_op("abs", np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def maximum_scalar(a, s: float):
    # clamp from below; subgradient 0 where the scalar branch wins or ties
    a = as_tensor(a)
    s = float(s)
    keep = a.data > s
    return apply_op(
        "max_scalar", np.maximum(a.data, s), (a,), lambda g: (g * keep,)
    )


def clamp(a, lo: float, hi: float):
    a = as_tensor(a)
    keep = (a.data > lo) & (a.data < hi)
    return apply_op(
        "clamp", np.clip(a.data, lo, hi), (a,), lambda g: (g * keep,)
    )


def minimum(a, b):
    # elementwise min; ties route the gradient to the first argument
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "minimum")
    take_a = a.data <= b.data
    return apply_op(
        "minimum",
        np.minimum(a.data, b.data),
        (a, b),
        lambda g: (unbroadcast(g * take_a, a.shape), unbroadcast(g * ~take_a, b.shape)),
    )


def maximum(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "maximum")
    take_a = a.data >= b.data
    return apply_op(
        "maximum",
        np.maximum(a.data, b.data),
        (a, b),
        lambda g: (unbroadcast(g * take_a, a.shape), unbroadcast(g * ~take_a, b.shape)),
    )


def sigmoid(a):
    a = as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return apply_op("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def elu(a):
    a = as_tensor(a)
    neg = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(a.data > 0, a.data, neg)
    return apply_op(
        "elu", out, (a,), lambda g: (g * np.where(a.data > 0, 1.0, neg + 1.0),)
    )


def where(cond, a, b):
    """Select by a boolean ndarray; cond is data, never differentiated."""
    cond = np.asarray(cond, dtype=bool)
    a, b = as_tensor(a), as_tensor(b)
    out = np.where(cond, a.data, b.data)
    return apply_op(
        "where",
        out,
        (a, b),
        lambda g: (
            unbroadcast(g * cond, a.shape),
            unbroadcast(g * ~cond, b.shape),
        ),
    )


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "abs": lambda a, b=None: absolute(a),
    "exp": lambda a, b=None: exp(a),
    "log": lambda a, b=None: log(a),
    "power": power,
    "max-with-scalar": maximum_scalar,
    "clamp": clamp,
}


def elementwise(op_kind: str, a, b=None, **kw):
    """Dispatch table over the supported elementwise kinds."""
    if op_kind not in _ELEMENTWISE:
        raise ContractError(
            f"unknown elementwise op {op_kind!r}; valid: {sorted(_ELEMENTWISE)}"
        )
    fn = _ELEMENTWISE[op_kind]
    if op_kind in ("abs", "exp", "log"):
        return fn(a)
    if op_kind == "clamp":
        return fn(a, **kw) if kw else fn(a, b[0], b[1])
    return fn(a, b)


# ---------------------------------------------------------------------------
# reductions / structure


def _sum_backward(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, shape).copy()
    if not keepdims:
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(a % len(shape) for a in axes)
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape).copy()


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    return apply_op(
        "sum", out, (a,), lambda g: (_sum_backward(g, a.shape, axis, keepdims),)
    )


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else a.data.size // out.size
    return apply_op(
        "mean",
        out,
        (a,),
        lambda g: (_sum_backward(g / count, a.shape, axis, keepdims),),
    )


def reshape(a, shape):
    a = as_tensor(a)
    return apply_op(
        "reshape", a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),)
    )


def transpose2d(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose2d expects 2-D, got {a.shape}")
    return apply_op("transpose", a.data.T.copy(), (a,), lambda g: (g.T.copy(),))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    return apply_op(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=axis))

    return apply_op(
        "concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd
    )


def getitem(a, idx):
    """Basic (non-duplicating) slicing with scatter backward."""
    a = as_tensor(a)
    out = np.array(a.data[idx])  # copy; keeps 0-d results 0-d

    def bwd(g):
        gx = np.zeros_like(a.data)
        gx[idx] = np.asarray(g).reshape(out.shape)
        return (gx,)

    return apply_op("getitem", out, (a,), bwd)


def pad_zero(a, pad_width):
    """Zero padding; pad_width follows numpy convention for all axes."""
    a = as_tensor(a)
    out = np.pad(a.data, pad_width)
    slices = tuple(
        slice(p[0], p[0] + s) for p, s in zip(pad_width, a.shape)
    )
    return apply_op("pad_zero", out, (a,), lambda g: (np.ascontiguousarray(g[slices]),))


def stop_gradient(a) -> Tensor:
    """Forward identity, zero upstream gradient.

    The producing tensor is still registered on the tape so it receives
    an (all-zero) grad from backward, making stop-gradient contracts
    directly assertable.
    """
    a = as_tensor(a)
    out = Tensor(a.data, requires_grad=False)
    tape = _recording()
    if tape is not None and a.requires_grad:
        tape.nodes.append(_Node(out, (a,), lambda g: (None,), "stop_gradient"))
    return out


def assert_all_finite(t, name="tensor"):
    data = t.data if isinstance(t, Tensor) else np.asarray(t)
    if not np.isfinite(data).all():
        bad = int((~np.isfinite(data)).sum())
        raise NonFiniteError(f"{name} contains {bad} non-finite values")
    return t
