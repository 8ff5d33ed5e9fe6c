"""Dense-tensor reverse-mode autodiff engine.

Tensors wrap numpy arrays and record their producing operation on an implicit
tape (parent links); creation order is already topological, and backward walks
it in reverse with a fixed accumulation order, so gradients are deterministic.

Broadcasting is deliberately limited to scalars; shape changes must go through
explicit reshape/expand so the trusted core stays small. Two float widths are
supported: float64 for property and gradient tests, float32 for training.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "Tensor", "tensor", "backward", "no_grad", "grad_enabled",
    "set_default_dtype", "get_default_dtype", "precision",
    "add", "sub", "mul", "scalar_mul", "matmul", "transpose", "concat",
    "reshape", "reduce_sum", "reduce_mean", "reduce_max", "softmax",
    "gelu", "sigmoid", "tanh", "relu", "softplus", "exp", "log", "sqrt",
    "absolute", "maximum", "expand", "gather_rows", "scatter_rows", "stack",
    "corrupt_gradient", "set_nan_checks",
]

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True
_NAN_CHECKS = False
# op-kind -> gradient scale factor; used by the verification harness to prove
# the finite-difference checker notices corrupted backward rules
_GRAD_SCALE: dict[str, float] = {}

GELU_C = 0.7978845608028654  # sqrt(2/pi), tanh-approximation constant


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be float32 or float64")
    _DEFAULT_DTYPE = dtype


def get_default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype used for newly created leaf tensors."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


def set_nan_checks(on: bool) -> None:
    global _NAN_CHECKS
    _NAN_CHECKS = bool(on)


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    old = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = old


def grad_enabled() -> bool:
    return _GRAD_ENABLED


@contextlib.contextmanager
def corrupt_gradient(kind: str, scale: float):
    """Scale gradients flowing through ops of the given kind (debug only)."""
    _GRAD_SCALE[kind] = scale
    try:
        yield
    finally:
        _GRAD_SCALE.pop(kind, None)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_kind")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._kind = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, kind={self._kind}, requires_grad={self.requires_grad})"

    # operator sugar; implementations below
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

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return pow_const(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes=None):
        return transpose(self, axes)

    @property
    def T(self):
        return transpose(self, None)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def backward(self):
        backward(self)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        if g.shape != t.data.shape:
            raise ValueError(f"gradient shape {g.shape} != tensor shape {t.data.shape}")
        t.grad = g.copy() if g.dtype == t.data.dtype else g.astype(t.data.dtype)
    else:
        t.grad += g


def _make(kind: str, data: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if _NAN_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError(f"non-finite values out of op '{kind}'")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._kind = kind
    rg = _GRAD_ENABLED and any(p.requires_grad for p in parents)
    out.requires_grad = rg
    if rg:
        out._parents = parents

        def hooked(g, _fn=backward_fn, _kind=kind):
            s = _GRAD_SCALE.get(_kind)
            if s is not None:
                g = g * s
            _fn(g)

        out._backward = hooked
    else:
        out._parents = ()
        out._backward = None
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad for every ancestor of a scalar loss on the tape."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad; nothing to backpropagate")
    # iterative post-order DFS gives a deterministic topological order
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _check_same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


def add(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        out_data = a.data + b
        return _make("add", out_data, (a,), lambda g: _accumulate(a, g))
    if not isinstance(a, Tensor) and np.isscalar(a):
        return add(b, a)
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "add")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make("add", a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        return _make("sub", a.data - b, (a,), lambda g: _accumulate(a, g))
    if not isinstance(a, Tensor) and np.isscalar(a):
        b = _as_tensor(b)
        return _make("sub", a - b.data, (b,), lambda g: _accumulate(b, -g))
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "sub")

    def bwd(g):
        _accumulate(a, g)
        _accumulate(b, -g)

    return _make("sub", a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        return scalar_mul(a, float(b))
    if not isinstance(a, Tensor) and np.isscalar(a):
        return scalar_mul(b, float(a))
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "mul")

    def bwd(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _make("mul", a.data * b.data, (a, b), bwd)


def scalar_mul(a, s: float) -> Tensor:
    a = _as_tensor(a)
    s = float(s)
    return _make("scalar_mul", a.data * s, (a,), lambda g: _accumulate(a, g * s))


def div(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        return scalar_mul(a, 1.0 / float(b))
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "div")
    out = a.data / b.data

    def bwd(g):
        _accumulate(a, g / b.data)
        _accumulate(b, -g * out / b.data)

    return _make("div", out, (a, b), bwd)


def pow_const(a, p) -> Tensor:
    a = _as_tensor(a)
    p = float(p)

    def bwd(g):
        _accumulate(a, g * p * a.data ** (p - 1.0))

    return _make("pow", a.data ** p, (a,), bwd)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def bwd(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make("matmul", a.data @ b.data, (a, b), bwd)


def bmm(a, b) -> Tensor:
    """Batched matmul on 3-D tensors: (B, N, K) @ (B, K, M) -> (B, N, M)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 3 or b.ndim != 3 or a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
        raise ValueError(f"bmm: incompatible shapes {a.shape} @ {b.shape}")

    def bwd(g):
        _accumulate(a, np.matmul(g, b.data.transpose(0, 2, 1)))
        _accumulate(b, np.matmul(a.data.transpose(0, 2, 1), g))

    return _make("bmm", np.matmul(a.data, b.data), (a, b), bwd)


def transpose(a, axes=None) -> Tensor:
    a = _as_tensor(a)
    if axes is None:
        axes = tuple(range(a.ndim))[::-1]
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        _accumulate(a, g.transpose(inv))

    return _make("transpose", a.data.transpose(axes), (a,), bwd)


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    old = a.shape

    def bwd(g):
        _accumulate(a, g.reshape(old))

    return _make("reshape", a.data.reshape(shape), (a,), bwd)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ValueError("concat of an empty sequence")
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _make("concat", np.concatenate([t.data for t in ts], axis=axis), tuple(ts), bwd)


def stack(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]

    def bwd(g):
        for i, t in enumerate(ts):
            _accumulate(t, np.take(g, i, axis=axis))

    return _make("stack", np.stack([t.data for t in ts], axis=axis), tuple(ts), bwd)


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis
               for p in parts)


def getitem(a, idx) -> Tensor:
    a = _as_tensor(a)
    out = a.data[idx]
    if np.isscalar(out):
        out = np.asarray(out)
    basic = _is_basic_index(idx)

    def bwd(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        if basic:
            a.grad[idx] += g  # basic slices never alias, += is safe and fast
        else:
            np.add.at(a.grad, idx, g)

    return _make("slice", out.copy(), (a,), bwd)


def gather_rows(a, indices) -> Tensor:
    """out[i] = a[indices[i]]; backward scatter-adds into the gathered rows."""
    a = _as_tensor(a)
    indices = np.asarray(indices, dtype=np.int64)

    def bwd(g):
        if not a.requires_grad:
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, indices, g)

    return _make("gather_rows", a.data[indices], (a,), bwd)


def scatter_rows(src, indices, n_rows: int) -> Tensor:
    """out[indices[i]] += src[i]; rows not hit by any index stay zero."""
    src = _as_tensor(src)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.ndim != 1 or len(indices) != src.shape[0]:
        raise ValueError("scatter_rows: indices must be 1-D, one per source row")
    if len(indices) and (indices.min() < 0 or indices.max() >= n_rows):
        raise ValueError("scatter_rows: index out of range")
    out = np.zeros((n_rows,) + src.shape[1:], dtype=src.dtype)
    np.add.at(out, indices, src.data)

    def bwd(g):
        _accumulate(src, g[indices])

    return _make("scatter_rows", out, (src,), bwd)


def expand(a, shape) -> Tensor:
    """Explicit broadcast of size-1 (or missing leading) axes to `shape`."""
    a = _as_tensor(a)
    shape = tuple(shape)
    lead = len(shape) - a.ndim
    if lead < 0:
        raise ValueError(f"expand: target rank below input rank ({shape} vs {a.shape})")
    reduce_axes = tuple(range(lead)) + tuple(
        lead + i for i, d in enumerate(a.shape) if d == 1 and shape[lead + i] != 1
    )

    def bwd(g):
        red = g.sum(axis=reduce_axes, keepdims=False) if reduce_axes else g
        _accumulate(a, red.reshape(a.shape))

    return _make("expand", np.broadcast_to(a.data, shape).copy(), (a,), bwd)


def reduce_sum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def bwd(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _make("reduce_sum", a.data.sum(axis=axis, keepdims=keepdims), (a,), bwd)


def reduce_mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    n = a.size if axis is None else a.shape[axis]

    def bwd(g):
        if axis is None:
            _accumulate(a, np.broadcast_to(g / n, a.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g / n, a.shape).copy())

    return _make("reduce_mean", a.data.mean(axis=axis, keepdims=keepdims), (a,), bwd)


def reduce_max(a, axis: int, keepdims: bool = False) -> Tensor:
    """Max along one axis; ties route the gradient to the first occurrence."""
    a = _as_tensor(a)
    arg = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(arg, axis), axis=axis)

    def bwd(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        buf = np.zeros_like(a.data)
        np.put_along_axis(buf, np.expand_dims(arg, axis), g, axis=axis)
        _accumulate(a, buf)

    data = out if keepdims else np.squeeze(out, axis=axis)
    return _make("reduce_max", data, (a,), bwd)


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to the first argument."""
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = _as_tensor(a)
        mask = a.data >= b

        def bwd_s(g):
            _accumulate(a, g * mask)

        return _make("maximum", np.maximum(a.data, b), (a,), bwd_s)
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same_shape(a, b, "maximum")
    mask = a.data >= b.data

    def bwd(g):
        _accumulate(a, g * mask)
        _accumulate(b, g * ~mask)

    return _make("maximum", np.maximum(a.data, b.data), (a, b), bwd)


def exp(a) -> Tensor:
    a = _as_tensor(a)
    out = np.exp(a.data)
    return _make("exp", out, (a,), lambda g: _accumulate(a, g * out))


def log(a) -> Tensor:
    a = _as_tensor(a)
    return _make("log", np.log(a.data), (a,), lambda g: _accumulate(a, g / a.data))


def sqrt(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.data)
    return _make("sqrt", out, (a,), lambda g: _accumulate(a, g * (0.5 / out)))


def absolute(a) -> Tensor:
    a = _as_tensor(a)
    s = np.sign(a.data)
    return _make("abs", np.abs(a.data), (a,), lambda g: _accumulate(a, g * s))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.data > 0
    return _make("relu", a.data * mask, (a,), lambda g: _accumulate(a, g * mask))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _make("sigmoid", out, (a,), lambda g: _accumulate(a, g * out * (1.0 - out)))


def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _make("tanh", out, (a,), lambda g: _accumulate(a, g * (1.0 - out * out)))


def gelu(a) -> Tensor:
    """GELU, tanh approximation: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    a = _as_tensor(a)
    x = a.data
    x2 = x * x
    inner = GELU_C * (x + 0.044715 * (x2 * x))
    th = np.tanh(inner)
    out = 0.5 * x * (1.0 + th)

    def bwd(g):
        d_inner = GELU_C * (1.0 + (3 * 0.044715) * x2)
        d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * d_inner
        _accumulate(a, g * d)

    return _make("gelu", out, (a,), bwd)


def softplus(a) -> Tensor:
    a = _as_tensor(a)
    out = np.logaddexp(0.0, a.data)

    def bwd(g):
        _accumulate(a, g / (1.0 + np.exp(-a.data)))

    return _make("softplus", out, (a,), bwd)


def softmax(a, axis: int = -1) -> Tensor:
    a = _as_tensor(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        _accumulate(a, out * (g - inner))

    return _make("softmax", out, (a,), bwd)
