"""Minimal reverse-mode autodiff engine over numpy arrays.

Every operation records itself on the tensors it produces (creation-ordered
graph = the tape); ``backward`` replays the tape once in reverse topological
order, accumulating gradients. Double precision is the default so finite
difference checks have headroom.

Broadcasting is deliberately restricted: scalar-with-tensor and row-vector
bias only. Anything else raises ``ShapeError``.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

LOG_EPS = 1e-12
LOGIT_EPS = 1e-6
LAYERNORM_EPS = 1e-12


class ShapeError(ValueError):
    """Raised when operands have incompatible shapes for an op."""


_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op", "_id")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("Tensor(data) does not accept a Tensor; use .clone semantics explicitly")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype != np.float32:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._op = "leaf"
        self._id = next(_ids)

    # -- bookkeeping -------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- autodiff ----------------------------------------------------------

    def backward(self) -> None:
        """Accumulate gradients of this scalar into every requires_grad leaf.

        The tape is consumed: a second backward over the same graph raises.
        """
        if self.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._op == "consumed":
            raise RuntimeError("backward already called: tape consumed")

        order = _toposort(self)
        self.grad = np.ones_like(self.data)
        for node in order:  # reverse topological, each node exactly once
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                node._parents = ()
                node._backward = None
                node._op = "consumed"
        # intermediate grads stay available; leaves keep theirs for the optimizer

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(_wrap(other, self), self)

    def __sub__(self, other):
        return add(self, scale(_wrap(other, self), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, self), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(_wrap(other, self), self)

    def __truediv__(self, other):
        return div(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes=None):
        return transpose(self, axes)


def _toposort(root: Tensor) -> list[Tensor]:
    """Reverse topological order, iterative to survive deep graphs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], bwd_builder, op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.requires_grad = any(p.requires_grad for p in parents)
    out.grad = None
    out._id = next(_ids)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = bwd_builder()
        out._op = op
    else:  # constants stay off the tape
        out._parents = ()
        out._backward = None
        out._op = "const"
    return out


# -- elementwise shape policy ---------------------------------------------


def _check_elementwise(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    if a.size == 1 or b.size == 1:
        return
    # row-vector bias: (..., n) op (n,)
    if b.ndim == 1 and a.ndim >= 2 and a.shape[-1] == b.shape[0]:
        return
    if a.ndim == 1 and b.ndim >= 2 and b.shape[-1] == a.shape[0]:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible "
                     "(only scalar and row-vector-bias broadcasting is supported)")


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g over axes that were broadcast to recover a parent's shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- primitives -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    _check_elementwise("add", a, b)
    data = a.data + b.data

    def build():
        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return bwd

    return _result(data, (a, b), build, "add")


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    _check_elementwise("mul", a, b)
    data = a.data * b.data

    def build():
        ad, bd = a.data, b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * bd, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * ad, b.shape))
        return bwd

    return _result(data, (a, b), build, "mul")


def div(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    _check_elementwise("div", a, b)
    data = a.data / b.data

    def build():
        ad, bd = a.data, b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g / bd, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g * ad / (bd * bd), b.shape))
        return bwd

    return _result(data, (a, b), build, "div")


def scale(a: Tensor, s: float) -> Tensor:
    a = _wrap(a)
    s = float(s)
    data = a.data * s

    def build():
        def bwd(g):
            a._accumulate(g * s)
        return bwd

    return _result(data, (a,), build, "scale")


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    if a.ndim == 2 and b.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not compatible")
    elif a.ndim == 3 and b.ndim == 3:
        if a.shape[0] != b.shape[0] or a.shape[2] != b.shape[1]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are not compatible")
    else:
        raise ShapeError(f"matmul: expected 2D@2D or 3D@3D, got {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def build():
        ad, bd = a.data, b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g @ np.swapaxes(bd, -1, -2))
            if b.requires_grad:
                b._accumulate(np.swapaxes(ad, -1, -2) @ g)
        return bwd

    return _result(data, (a, b), build, "matmul")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one tensor")
    data = np.concatenate([t.data for t in tensors], axis=axis)

    def build():
        sizes = [t.shape[axis] for t in tensors]
        splits = np.cumsum(sizes)[:-1]

        def bwd(g):
            for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
                if t.requires_grad:
                    t._accumulate(piece)
        return bwd

    return _result(data, tensors, build, "concat")


def slice_(a: Tensor, idx) -> Tensor:
    a = _wrap(a)
    data = a.data[idx]
    if np.isscalar(data) or data.ndim == 0:
        data = np.asarray(data)

    def build():
        shape = a.shape

        def bwd(g):
            if a.requires_grad:
                full = np.zeros(shape, dtype=a.data.dtype)
                np.add.at(full, idx, g)
                a._accumulate(full)
        return bwd

    return _result(data, (a,), build, "slice")


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    data = a.data.reshape(shape)

    def build():
        orig = a.shape

        def bwd(g):
            a._accumulate(g.reshape(orig))
        return bwd

    return _result(data, (a,), build, "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    a = _wrap(a)
    data = np.transpose(a.data, axes)

    def build():
        inv = None if axes is None else np.argsort(axes)

        def bwd(g):
            a._accumulate(np.transpose(g, inv))
        return bwd

    return _result(data, (a,), build, "transpose")


def sum_(a: Tensor, axis=None) -> Tensor:
    a = _wrap(a)
    data = np.asarray(a.data.sum(axis=axis))

    def build():
        shape = a.shape

        def bwd(g):
            a._accumulate(np.broadcast_to(_expand(g, shape, axis), shape).copy())
        return bwd

    return _result(data, (a,), build, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    a = _wrap(a)
    data = np.asarray(a.data.mean(axis=axis))

    def build():
        shape = a.shape
        n = a.size if axis is None else np.prod([shape[i] for i in _axes(axis, len(shape))])

        def bwd(g):
            a._accumulate(np.broadcast_to(_expand(g, shape, axis), shape) / n)
        return bwd

    return _result(data, (a,), build, "mean")


def _axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(ax % ndim for ax in axis)


def _expand(g: np.ndarray, shape: tuple[int, ...], axis) -> np.ndarray:
    if axis is None:
        return np.asarray(g)
    for ax in sorted(_axes(axis, len(shape))):
        g = np.expand_dims(g, ax)
    return g


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    a = _wrap(a)
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} out of range for shape {a.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def build():
        y = data

        def bwd(g):
            dot = (g * y).sum(axis=axis, keepdims=True)
            a._accumulate((g - dot) * y)
        return bwd

    return _result(data, (a,), build, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize over the last axis, then apply learnable gain and bias.

    eps is tiny (1e-12) so the pre-affine output really has unit variance;
    it only guards exactly-constant rows.
    """
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LAYERNORM_EPS)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def build():
        gd = gain.data

        def bwd(g):
            if gain.requires_grad:
                gain._accumulate((g * xhat).reshape(-1, d).sum(axis=0))
            if bias.requires_grad:
                bias._accumulate(g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                gxhat = g * gd
                # d/dx of (x - mu) * inv with mu, inv functions of the row
                term = gxhat - gxhat.mean(axis=-1, keepdims=True) \
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
                x._accumulate(term * inv)
        return bwd

    return _result(data, (x, gain, bias), build, "layer_norm")


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.maximum(a.data, 0.0)

    def build():
        mask = a.data > 0

        def bwd(g):
            a._accumulate(g * mask)
        return bwd

    return _result(data, (a,), build, "relu")


def sigmoid(a: Tensor) -> Tensor:
    a = _wrap(a)
    t = np.exp(-np.abs(a.data))  # exp of a non-positive number: never overflows
    data = np.where(a.data >= 0, 1.0 / (1.0 + t), t / (1.0 + t))

    def build():
        y = data

        def bwd(g):
            a._accumulate(g * y * (1.0 - y))
        return bwd

    return _result(data, (a,), build, "sigmoid")


def inverse_sigmoid(a: Tensor) -> Tensor:
    """Logit with input clamped to [1e-6, 1-1e-6]; clamped coords get zero grad."""
    a = _wrap(a)
    x = np.clip(a.data, LOGIT_EPS, 1.0 - LOGIT_EPS)
    data = np.log(x) - np.log1p(-x)

    def build():
        interior = (a.data > LOGIT_EPS) & (a.data < 1.0 - LOGIT_EPS)
        dydx = np.where(interior, 1.0 / (x * (1.0 - x)), 0.0)

        def bwd(g):
            a._accumulate(g * dydx)
        return bwd

    return _result(data, (a,), build, "inverse_sigmoid")


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.exp(a.data)

    def build():
        y = data

        def bwd(g):
            a._accumulate(g * y)
        return bwd

    return _result(data, (a,), build, "exp")


def log(a: Tensor) -> Tensor:
    """Natural log with the argument clamped at 1e-12 (zero grad below the clamp)."""
    a = _wrap(a)
    x = np.maximum(a.data, LOG_EPS)
    data = np.log(x)

    def build():
        dydx = np.where(a.data > LOG_EPS, 1.0 / x, 0.0)

        def bwd(g):
            a._accumulate(g * dydx)
        return bwd

    return _result(data, (a,), build, "log")


def sin(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.sin(a.data)

    def build():
        def bwd(g):
            a._accumulate(g * np.cos(a.data))
        return bwd

    return _result(data, (a,), build, "sin")


def cos(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.cos(a.data)

    def build():
        def bwd(g):
            a._accumulate(-g * np.sin(a.data))
        return bwd

    return _result(data, (a,), build, "cos")


def maximum(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    _check_elementwise("maximum", a, b)
    data = np.maximum(a.data, b.data)

    def build():
        amask = a.data >= b.data  # ties feed the first argument

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * amask, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * ~amask, b.shape))
        return bwd

    return _result(data, (a, b), build, "maximum")


def minimum(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b, a)
    _check_elementwise("minimum", a, b)
    data = np.minimum(a.data, b.data)

    def build():
        amask = a.data <= b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * amask, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * ~amask, b.shape))
        return bwd

    return _result(data, (a, b), build, "minimum")


def abs_(a: Tensor) -> Tensor:
    a = _wrap(a)
    data = np.abs(a.data)

    def build():
        s = np.sign(a.data)

        def bwd(g):
            a._accumulate(g * s)
        return bwd

    return _result(data, (a,), build, "abs")


def powc(a: Tensor, p: float) -> Tensor:
    """a**p for constant p; intended for non-negative arguments (focal loss)."""
    a = _wrap(a)
    p = float(p)
    data = a.data ** p

    def build():
        def bwd(g):
            a._accumulate(g * p * a.data ** (p - 1.0))
        return bwd

    return _result(data, (a,), build, "powc")


PRIMITIVES: dict[str, Callable] = {
    "matmul": matmul,
    "add": add,
    "mul": mul,
    "div": div,
    "concat": concat,
    "slice": slice_,
    "softmax": softmax,
    "layer_norm": layer_norm,
    "relu": relu,
    "sigmoid": sigmoid,
    "inverse_sigmoid": inverse_sigmoid,
    "exp": exp,
    "log": log,
    "sum": sum_,
    "mean": mean,
    "scale": scale,
    "sin": sin,
    "cos": cos,
    "maximum": maximum,
    "minimum": minimum,
    "abs": abs_,
    "powc": powc,
    "reshape": reshape,
    "transpose": transpose,
}


def primitive_forward(op: str, *inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name; the result lands on the tape as usual."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **kwargs)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    f must be scalar-valued and re-runnable; error per coordinate is
    |analytic - numeric| / max(1, |analytic|).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    probe = Tensor(x.data.astype(np.float64).copy(), requires_grad=True)
    out = f(probe)
    if out.size != 1:
        raise ValueError("grad_check requires a scalar-valued function")
    out.backward()
    analytic = np.zeros_like(probe.data) if probe.grad is None else probe.grad.copy()

    flat = probe.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = float(f(probe).data)
        flat[i] = orig - eps
        lo = float(f(probe).data)
        flat[i] = orig
        numeric[i] = (hi - lo) / (2.0 * eps)
    numeric = numeric.reshape(probe.data.shape)

    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
