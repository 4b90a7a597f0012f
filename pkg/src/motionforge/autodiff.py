"""Minimal dense tensor engine with reverse-mode differentiation.

NumPy provides the dense kernels; the differentiation rules, graph recording
and the gradient-check oracle live here. Tensors are float32 by default;
float64 graphs are supported so the finite-difference oracle can run at a
higher precision than the system it is checking.

Broadcasting is restricted to parameter-over-leading-batch broadcasting
(a ``(d,)`` bias against ``(B, T, d)`` activations). Anything else must go
through an explicit :func:`expand`.
"""

from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, NumericError, ShapeError

Array = np.ndarray

_GELU_C = float(np.sqrt(2.0 / np.pi))


class Tensor:
    """A dense array node in the autodiff graph.

    ``grad`` is populated on leaf tensors with ``requires_grad=True`` after
    :func:`backward`; frozen tensors (``requires_grad=False``) never receive
    gradient accumulation.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: Array = arr
        self.grad: Optional[Array] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn: Optional[Callable[[Array], Sequence[Optional[Array]]]] = None
        self._op = "leaf"

    # -- introspection -------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> Array:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, op={self._op})"

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, float(other))

    __radd__ = __add__

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -float(other))

    def __rsub__(self, other):
        return shift(neg(self), float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes) -> "Tensor":
        return transpose(self, axes)


def _wrap(data: Array, op: str, parents: Sequence[Tensor],
          backward_fn: Callable[[Array], Sequence[Optional[Array]]]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    else:
        out._parents = ()
        out._backward_fn = None
    out._op = op
    return out


def _check_dtypes(op: str, *tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ContractError(f"{op}: mixed dtypes {sorted(d.name for d in dtypes)}")


def _check_batch_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    # allowed: identical shapes, or one operand's shape equal to a trailing
    # suffix of the other's (parameter broadcast over leading batch dims).
    sa, sb = a.shape, b.shape
    if sa == sb:
        return
    small, big = (sa, sb) if len(sa) < len(sb) else (sb, sa)
    if len(small) != len(big) and big[len(big) - len(small):] == small:
        return
    raise ShapeError(f"{op}: shapes {sa} vs {sb} (only leading-batch broadcasting is supported)")


def _unbroadcast(grad: Array, shape: tuple) -> Array:
    """Sum ``grad`` down to ``shape`` after a leading-batch broadcast."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    # defensive: collapse any size-1 axes that were broadcast
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- elementwise -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("add", a, b)
    _check_batch_broadcast("add", a, b)
    data = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _wrap(data, "add", (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("sub", a, b)
    _check_batch_broadcast("sub", a, b)
    data = a.data - b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _wrap(data, "sub", (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("mul", a, b)
    _check_batch_broadcast("mul", a, b)
    data = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _wrap(data, "mul", (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    return _wrap(-a.data, "neg", (a,), lambda g: (-g,))


def scale(a: Tensor, s: float) -> Tensor:
    """Multiply by a Python scalar."""
    s = a.data.dtype.type(s)
    return _wrap(a.data * s, "scale", (a,), lambda g: (g * s,))


def shift(a: Tensor, c: float) -> Tensor:
    """Add a Python scalar."""
    c = a.data.dtype.type(c)
    return _wrap(a.data + c, "shift", (a,), lambda g: (g,))


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        data = np.log(a.data)

    def bwd(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g / a.data,)

    return _wrap(data, "log", (a,), bwd)


def gelu(a: Tensor) -> Tensor:
    """tanh-approximation GELU."""
    x = a.data
    inner = _GELU_C * (x + 0.044715 * x * x * x)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def bwd(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x * x)
        d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return (g * d.astype(x.dtype),)

    return _wrap(data.astype(x.dtype), "gelu", (a,), bwd)


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0)

    def bwd(g):
        # subgradient 0 at exactly 0; finite-difference checks must avoid the kink
        return (g * (a.data > 0),)

    return _wrap(data, "relu", (a,), bwd)


# -- shape manipulation ------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        data = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: {a.shape} -> {shape}: {exc}") from None

    def bwd(g):
        return (g.reshape(a.shape),)

    return _wrap(data, "reshape", (a,), bwd)


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.data.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {a.shape}")
    data = a.data.transpose(axes)
    inv = tuple(np.argsort(axes))

    def bwd(g):
        return (g.transpose(inv),)

    return _wrap(data, "transpose", (a,), bwd)


def expand(a: Tensor, shape) -> Tensor:
    """Explicit broadcast of size-1/missing leading axes; gradient sums back."""
    shape = tuple(int(s) for s in shape)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"expand: {a.shape} -> {shape}") from None

    def bwd(g):
        return (_unbroadcast(g, a.shape),)

    return _wrap(np.ascontiguousarray(data), "expand", (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ContractError("concat: empty tensor list")
    _check_dtypes("concat", *tensors)
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        slicer = [slice(None)] * g.ndim
        grads = []
        for i in range(len(sizes)):
            slicer[axis] = slice(int(offsets[i]), int(offsets[i + 1]))
            grads.append(g[tuple(slicer)])
        return grads

    return _wrap(data, "concat", tuple(tensors), bwd)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Slice ``length`` entries from ``start`` along ``axis``."""
    if start < 0 or start + length > a.shape[axis]:
        raise ShapeError(f"narrow: [{start}:{start + length}] out of range for "
                         f"axis {axis} of shape {a.shape}")
    slicer = [slice(None)] * a.data.ndim
    slicer[axis] = slice(start, start + length)
    data = a.data[tuple(slicer)]

    def bwd(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[tuple(slicer)] = g
        return (full,)

    return _wrap(np.ascontiguousarray(data), "narrow", (a,), bwd)


# -- linear algebra ----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_dtypes("matmul", a, b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def bwd(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _wrap(data, "matmul", (a, b), bwd)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Affine map ``x @ weight + bias`` with ``weight`` of shape (in, out)."""
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out


def embedding(weight: Tensor, indices) -> Tensor:
    """Row lookup into ``weight``; gradient scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= weight.shape[0]):
        raise ContractError(f"embedding: index out of range for table of {weight.shape[0]} rows")
    data = weight.data[idx]

    def bwd(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, idx, g)
        return (gw,)

    return _wrap(np.ascontiguousarray(data), "embedding", (weight,), bwd)


# -- normalization / attention helpers ---------------------------------------


def softmax(a: Tensor) -> Tensor:
    """Numerically-stable softmax over the last axis."""
    x = a.data
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    data = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * data).sum(axis=-1, keepdims=True)
        return ((g - dot) * data,)

    return _wrap(data.astype(x.dtype), "softmax", (a,), bwd)


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Zero-mean unit-variance normalization over the last axis (no affine)."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def bwd(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return ((inv * (g - gm - xhat * gx)).astype(x.dtype),)

    return _wrap(xhat.astype(x.dtype), "layer_norm", (a,), bwd)


# -- reductions ---------------------------------------------------------------


def sum_all(a: Tensor) -> Tensor:
    data = a.data.sum()

    def bwd(g):
        return (np.broadcast_to(g, a.shape).astype(a.data.dtype),)

    return _wrap(np.asarray(data), "sum", (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    data = a.data.mean()

    def bwd(g):
        return (np.broadcast_to(g / n, a.shape).astype(a.data.dtype),)

    return _wrap(np.asarray(data), "mean", (a,), bwd)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all elements."""
    _check_dtypes("mse", a, b)
    if a.shape != b.shape:
        raise ShapeError(f"mse: shapes {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = diff.size
    data = np.asarray((diff * diff).mean())

    def bwd(g):
        d = (2.0 / n) * diff * g
        return d.astype(a.data.dtype), (-d).astype(b.data.dtype)

    return _wrap(data, "mse", (a, b), bwd)


# -- backward pass ------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Visits each recorded node exactly once in reverse topological order and
    accumulates gradients into leaf tensors with ``requires_grad=True``.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward_fn is None:
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg


# -- gradient checking --------------------------------------------------------


def grad_check(fn: Callable[[Tensor], Tensor], point, eps: float = 1e-3) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``fn`` must map one tensor to a scalar tensor. The check runs in float64
    regardless of the point's dtype so the oracle is more precise than the
    f32 production path. Relative error per coordinate is
    ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if eps <= 0:
        raise ContractError("grad_check: eps must be positive")
    x = Tensor(np.array(point, dtype=np.float64), requires_grad=True)
    out = fn(x)
    if out.data.size != 1:
        raise ContractError("grad_check: fn must be scalar-valued")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    flat = x.data.reshape(-1)
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = float(fn(Tensor(x.data, dtype=np.float64)).data)
        flat[i] = orig - eps
        f_minus = float(fn(Tensor(x.data, dtype=np.float64)).data)
        flat[i] = orig
        numeric[i] = (f_plus - f_minus) / (2.0 * eps)
        if not np.isfinite(numeric[i]) or not np.isfinite(analytic.reshape(-1)[i]):
            raise NumericError(f"grad_check: non-finite gradient at coordinate {i}")
    err = np.abs(analytic.reshape(-1) - numeric) / np.maximum(1.0, np.abs(numeric))
    return float(err.max()) if err.size else 0.0


def grad_check_params(loss_fn: Callable[[], Tensor], params: Iterable[tuple[str, Tensor]],
                      eps: float = 1e-4, samples_per_param: int = 8,
                      rng: Optional[np.random.Generator] = None) -> float:
    """Central-difference check of ``d loss / d param`` for a parameterized model.

    Checks a seeded random subset of coordinates from every parameter tensor
    (all coordinates when a tensor is smaller than ``samples_per_param``).
    Returns the max relative error over the checked coordinates.
    """
    rng = rng or np.random.default_rng(0)
    params = list(params)
    for _, p in params:
        p.zero_grad()
    loss = loss_fn()
    backward(loss)

    worst = 0.0
    for name, p in params:
        if not p.requires_grad:
            continue
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= samples_per_param else rng.choice(n, samples_per_param, replace=False)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            if not np.isfinite(numeric):
                raise NumericError(f"grad_check_params: non-finite difference in {name}[{i}]")
            err = abs(float(analytic.reshape(-1)[i]) - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
