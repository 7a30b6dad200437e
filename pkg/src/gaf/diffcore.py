"""Reverse-mode automatic differentiation on dense numpy arrays.

A deliberately small engine: eleven primitive kinds, a flat tape that
records every primitive executed while a tape is active, and a single
backward sweep that replays the records in reverse, accumulating
adjoints. A value consumed k times receives the sum of k contributions.
Gradients for parameters that never touch the loss come back as zeros.

Arrays are float32 by default; passing float64 leaves everything in
float64, which the finite-difference checks use. Operands of one
primitive must share a dtype, there is no silent promotion.
"""

import threading
from contextlib import contextmanager

import numpy as np
from scipy.special import erf

_SQRT2 = float(np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))

DEFAULT_DTYPE = np.float32
_ALLOWED_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))


class DenseArray:
    """A contiguous real-valued array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, dtype=None, requires_grad=False):
        if isinstance(data, np.ndarray):
            # explicit float64 arrays keep their precision; everything
            # else (lists, scalars, integer arrays) defaults to float32
            arr = np.asarray(data, dtype=dtype)
            if arr.dtype not in _ALLOWED_DTYPES:
                arr = arr.astype(DEFAULT_DTYPE)
        else:
            arr = np.asarray(data, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise FloatingPointError("DenseArray rejects non-finite values on construction")
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, arr, requires_grad):
        # internal fast path for op outputs; skips the finiteness scan
        out = cls.__new__(cls)
        out.data = arr
        out.requires_grad = requires_grad
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def __repr__(self):
        return f"DenseArray(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"


class TapeNode:
    __slots__ = ("kind", "inputs", "output", "aux")

    def __init__(self, kind, inputs, output, aux):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.aux = aux


class ComputationTape:
    """Ordered record of primitives, replayed exactly in reverse."""

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)


_active = threading.local()


def _current_tape():
    return getattr(_active, "tape", None)


@contextmanager
def recording(tape):
    """Route every primitive executed in the body onto `tape`."""
    if not isinstance(tape, ComputationTape):
        raise TypeError("recording() needs a ComputationTape")
    prev = _current_tape()
    _active.tape = tape
    try:
        yield tape
    finally:
        _active.tape = prev


def _as_dense(x):
    if isinstance(x, DenseArray):
        return x
    return DenseArray(x)


def _check_dtypes(kind, arrays):
    dt = arrays[0].dtype
    for a in arrays[1:]:
        if a.dtype != dt:
            raise TypeError(f"{kind}: mixed dtypes {[str(a.dtype) for a in arrays]}")
    return dt


def _bias_like(a_shape, b_shape):
    # b broadcasts over the leading batch axis: (B, n) + (n,)
    return len(b_shape) == 1 and len(a_shape) == 2 and b_shape[0] == a_shape[1]


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    return grad.sum(axis=0)


# ---------------------------------------------------------------------------
# forward rules: kind -> (inputs, aux) -> (output ndarray, aux for backward)

def _fwd_matmul(inputs, aux):
    a, b = inputs
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"matmul expects 2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    return a.data @ b.data, None


def _fwd_add(inputs, aux):
    a, b = inputs
    if a.shape != b.shape and not _bias_like(a.shape, b.shape):
        raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")
    return a.data + b.data, None


def _fwd_sub(inputs, aux):
    a, b = inputs
    if a.shape != b.shape and not _bias_like(a.shape, b.shape):
        raise ValueError(f"sub shape mismatch: {a.shape} - {b.shape}")
    return a.data - b.data, None


def _fwd_scalar_mul(inputs, aux):
    (a,) = inputs
    return a.data * a.data.dtype.type(aux), aux


def _fwd_elem_mul(inputs, aux):
    a, b = inputs
    if a.shape != b.shape:
        raise ValueError(f"elem_mul shape mismatch: {a.shape} * {b.shape}")
    return a.data * b.data, None


def _fwd_tanh(inputs, aux):
    (a,) = inputs
    out = np.tanh(a.data)
    return out, out


def _fwd_gelu(inputs, aux):
    (a,) = inputs
    x = a.data
    cdf = 0.5 * (1.0 + erf(x / x.dtype.type(_SQRT2)))
    return x * cdf, (x, cdf)


def _axis_ok(a, axis):
    return axis is None or (isinstance(axis, int) and -a.ndim <= axis < a.ndim)


def _fwd_reduce_sum(inputs, aux):
    (a,) = inputs
    if not _axis_ok(a, aux):
        raise ValueError(f"reduce_sum axis {aux} invalid for shape {a.shape}")
    return a.data.sum(axis=aux), aux


def _fwd_reduce_mean(inputs, aux):
    (a,) = inputs
    if not _axis_ok(a, aux):
        raise ValueError(f"reduce_mean axis {aux} invalid for shape {a.shape}")
    return a.data.mean(axis=aux, dtype=a.dtype), aux


def _fwd_square(inputs, aux):
    (a,) = inputs
    return a.data * a.data, None


def _fwd_concat(inputs, aux):
    axis = aux
    if len(inputs) == 0:
        raise ValueError("concat needs at least one input")
    nd = inputs[0].ndim
    if not (-nd <= axis < nd):
        raise ValueError(f"concat axis {axis} invalid for ndim {nd}")
    return np.concatenate([x.data for x in inputs], axis=axis), axis


_FORWARD = {
    "matmul": _fwd_matmul,
    "add": _fwd_add,
    "sub": _fwd_sub,
    "scalar_mul": _fwd_scalar_mul,
    "elem_mul": _fwd_elem_mul,
    "tanh": _fwd_tanh,
    "gelu": _fwd_gelu,
    "reduce_sum": _fwd_reduce_sum,
    "reduce_mean": _fwd_reduce_mean,
    "square": _fwd_square,
    "concat": _fwd_concat,
}


# ---------------------------------------------------------------------------
# backward rules: node, upstream grad -> per-input grads (None = no grad)

def _bwd_matmul(node, g):
    a, b = node.inputs
    return g @ b.data.T, a.data.T @ g


def _bwd_add(node, g):
    a, b = node.inputs
    return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)


def _bwd_sub(node, g):
    a, b = node.inputs
    return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)


def _bwd_scalar_mul(node, g):
    return (g * g.dtype.type(node.aux),)


def _bwd_elem_mul(node, g):
    a, b = node.inputs
    return g * b.data, g * a.data


def _bwd_tanh(node, g):
    out = node.aux
    return (g * (1.0 - out * out),)


def _bwd_gelu(node, g):
    x, cdf = node.aux
    pdf = np.exp(-0.5 * x * x) * x.dtype.type(_INV_SQRT_2PI)
    return (g * (cdf + x * pdf),)


def _bwd_reduce_sum(node, g):
    (a,) = node.inputs
    axis = node.aux
    if axis is None:
        return (np.broadcast_to(g, a.data.shape).astype(a.dtype, copy=True),)
    return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy(),)


def _bwd_reduce_mean(node, g):
    (a,) = node.inputs
    axis = node.aux
    if axis is None:
        count = a.data.size
        return ((np.broadcast_to(g, a.data.shape) / a.dtype.type(count)).astype(a.dtype, copy=False),)
    count = a.data.shape[axis]
    return (np.broadcast_to(np.expand_dims(g, axis), a.data.shape) / a.dtype.type(count),)


def _bwd_square(node, g):
    (a,) = node.inputs
    return (2.0 * a.data * g,)


def _bwd_concat(node, g):
    axis = node.aux
    sizes = [x.data.shape[axis] for x in node.inputs]
    splits = np.cumsum(sizes)[:-1]
    return tuple(np.ascontiguousarray(part) for part in np.split(g, splits, axis=axis))


_BACKWARD = {
    "matmul": _bwd_matmul,
    "add": _bwd_add,
    "sub": _bwd_sub,
    "scalar_mul": _bwd_scalar_mul,
    "elem_mul": _bwd_elem_mul,
    "tanh": _bwd_tanh,
    "gelu": _bwd_gelu,
    "reduce_sum": _bwd_reduce_sum,
    "reduce_mean": _bwd_reduce_mean,
    "square": _bwd_square,
    "concat": _bwd_concat,
}

PRIMITIVE_KINDS = tuple(sorted(_FORWARD))


def forward_primitive(kind, inputs, aux=None):
    """Execute one primitive and record it on the active tape, if any."""
    fwd = _FORWARD.get(kind)
    if fwd is None:
        raise KeyError(f"unknown primitive kind {kind!r}")
    inputs = tuple(_as_dense(x) for x in inputs)
    _check_dtypes(kind, inputs)
    out_data, back_aux = fwd(inputs, aux)
    rg = any(x.requires_grad for x in inputs)
    out = DenseArray._wrap(out_data, rg)
    tape = _current_tape()
    if tape is not None:
        tape.nodes.append(TapeNode(kind, inputs, out, back_aux))
    return out


def matmul(a, b):
    return forward_primitive("matmul", (a, b))


def add(a, b):
    return forward_primitive("add", (a, b))


def sub(a, b):
    return forward_primitive("sub", (a, b))


def scalar_mul(a, s):
    s = float(s)
    if not np.isfinite(s):
        raise FloatingPointError(f"scalar_mul with non-finite scalar {s}")
    return forward_primitive("scalar_mul", (a,), aux=s)


def elem_mul(a, b):
    return forward_primitive("elem_mul", (a, b))


def tanh(a):
    return forward_primitive("tanh", (a,))


def gelu(a):
    return forward_primitive("gelu", (a,))


def reduce_sum(a, axis=None):
    return forward_primitive("reduce_sum", (a,), aux=axis)


def reduce_mean(a, axis=None):
    return forward_primitive("reduce_mean", (a,), aux=axis)


def square(a):
    return forward_primitive("square", (a,))


def concat(arrays, axis=-1):
    return forward_primitive("concat", tuple(arrays), aux=axis)


def backward(tape, loss, params):
    """Adjoints of a scalar `loss` with respect to `params`.

    Replays the tape in reverse once. Parameters that never influenced
    the loss get exact zero gradients. Raises if the loss is not scalar
    or was not produced on this tape.
    """
    if not isinstance(loss, DenseArray) or loss.data.size != 1:
        raise ValueError("backward needs a scalar DenseArray loss")
    params = list(params)
    produced = {id(n.output) for n in tape.nodes}
    if id(loss) not in produced:
        raise ValueError("loss was not produced on this tape")

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node.output), None)
        if g is None:
            continue
        input_grads = _BACKWARD[node.kind](node, g)
        for inp, gi in zip(node.inputs, input_grads):
            if gi is None or not inp.requires_grad:
                continue
            seen = grads.get(id(inp))
            grads[id(inp)] = gi if seen is None else seen + gi

    out = {}
    for p in params:
        g = grads.get(id(p))
        if g is None:
            g = np.zeros_like(p.data)
        out[p] = DenseArray._wrap(np.ascontiguousarray(g), False)
    return out


class AdamState:
    """Per-parameter first/second moments plus the shared step counter.

    Weight decay is decoupled (applied directly to the weights, not the
    gradient) and defaults to zero.
    """

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.99, eps=1e-8, weight_decay=0.0):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adam_step(state, params, grads):
    """One Adam update, in place, with bias correction.

    `params` maps names to DenseArrays, `grads` maps those same
    DenseArray objects to gradients (the shape backward() returns).
    """
    state.step_count += 1
    t = state.step_count
    corr1 = 1.0 - state.beta1 ** t
    corr2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[p].data
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter shape {p.data.shape} for {name!r}")
        if state.weight_decay != 0.0:
            p.data *= p.dtype.type(1.0 - state.lr * state.weight_decay)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / m.dtype.type(corr1)
        v_hat = v / v.dtype.type(corr2)
        p.data -= p.dtype.type(state.lr) * m_hat / (np.sqrt(v_hat) + p.dtype.type(state.eps))
