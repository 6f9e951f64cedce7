"""Reverse-mode automatic differentiation over numpy arrays.

A small define-by-run tape: every operation returns a new :class:`Tensor`
holding the numpy result plus a closure that maps the output cotangent to
input cotangents.  ``backward`` walks the graph in reverse topological
order exactly once and accumulates into ``.grad`` of every reachable
tensor that has ``requires_grad`` set.

All real data is float64.  Complex tensors (complex128) are permitted in
the segment between a forward and an inverse spectral transform; their
cotangents are stored as complex arrays with the convention
``g = dL/d(re) + 1j * dL/d(im)``, which makes the chain rule for the
R-linear spectral operations the plain conjugate-transpose (adjoint).
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes for the requested operation."""


class ContractError(ValueError):
    """An operation was called outside its contract (non-scalar loss, bad op kind, ...)."""


class DomainError(ValueError):
    """Elementwise operation evaluated outside its domain (log/sqrt of negative input)."""


def _as_array(x) -> np.ndarray:
    a = np.asarray(x)
    if a.dtype == np.complex128 or np.iscomplexobj(a):
        return np.asarray(a, dtype=np.complex128)
    return np.asarray(a, dtype=np.float64)


class Tensor:
    """N-dimensional array node participating in reverse-mode differentiation."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "op")

    def __init__(self, data, requires_grad: bool = False, *, _parents=(), _vjp=None, op="leaf"):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = _parents
        self._vjp: Callable | None = _vjp
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.reshape(-1)[0].item()

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar so model right-hand sides can be written once and
    # evaluated on either numpy arrays or tape tensors.
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
        return scale(self, -1.0)

    def __pow__(self, n):
        return powi(self, n)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a cotangent produced under numpy broadcasting back to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _make(data, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    requires = any(p.requires_grad for p in parents)
    if not requires:
        return Tensor(data, op=op)
    return Tensor(data, requires_grad=True, _parents=tuple(parents), _vjp=vjp, op=op)


# ---------------------------------------------------------------------------
# binary elementwise primitives (with numpy broadcasting)
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(out, (a, b), vjp, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), vjp, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), vjp, "div")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _make(out, (a, b), vjp, "matmul")


# ---------------------------------------------------------------------------
# unary elementwise primitives
# ---------------------------------------------------------------------------

def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    out = x.data * c

    def vjp(g):
        return (g * c,)

    return _make(out, (x,), vjp, "scale")


def square(x) -> Tensor:
    x = as_tensor(x)
    out = x.data * x.data

    def vjp(g):
        return (g * (2.0 * x.data),)

    return _make(out, (x,), vjp, "square")


def powi(x, n) -> Tensor:
    x = as_tensor(x)
    n = int(n)
    if n < 1:
        raise ContractError("powi requires integer exponent >= 1")
    out = x.data ** n

    def vjp(g):
        return (g * (n * x.data ** (n - 1)),)

    return _make(out, (x,), vjp, f"powi{n}")


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data < 0):
        raise DomainError("sqrt of negative input")
    out = np.sqrt(x.data)

    def vjp(g):
        return (g / (2.0 * out),)

    return _make(out, (x,), vjp, "sqrt")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (x,), vjp, "exp")


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log of non-positive input")
    out = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return _make(out, (x,), vjp, "log")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (x,), vjp, "tanh")


def sin(x) -> Tensor:
    x = as_tensor(x)
    out = np.sin(x.data)

    def vjp(g):
        return (g * np.cos(x.data),)

    return _make(out, (x,), vjp, "sin")


def custom_unary(x, fn: Callable, dfn: Callable, name: str) -> Tensor:
    """Elementwise op from a value function and its derivative (both numpy-level)."""
    x = as_tensor(x)
    out = fn(x.data)

    def vjp(g):
        return (g * dfn(x.data),)

    return _make(out, (x,), vjp, name)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------

def sum_all(x) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum()

    def vjp(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), vjp, "sum")


def mean_all(x) -> Tensor:
    x = as_tensor(x)
    out = x.data.mean()
    inv = 1.0 / x.size

    def vjp(g):
        return (np.full(x.shape, g * inv),)

    return _make(out, (x,), vjp, "mean")


def variance(x) -> Tensor:
    """Population variance of all elements; d var / d x_i = 2 (x_i - mean) / n."""
    x = as_tensor(x)
    mu = x.data.mean()
    centered = x.data - mu
    out = np.mean(centered * centered)

    def vjp(g):
        return (g * (2.0 / x.size) * centered,)

    return _make(out, (x,), vjp, "variance")


def vmin(x) -> Tensor:
    x = as_tensor(x)
    idx = int(np.argmin(x.data))
    out = x.data.reshape(-1)[idx]

    def vjp(g):
        gx = np.zeros(x.shape)
        gx.reshape(-1)[idx] = g
        return (gx,)

    return _make(out, (x,), vjp, "min")


def vmax(x) -> Tensor:
    x = as_tensor(x)
    idx = int(np.argmax(x.data))
    out = x.data.reshape(-1)[idx]

    def vjp(g):
        gx = np.zeros(x.shape)
        gx.reshape(-1)[idx] = g
        return (gx,)

    return _make(out, (x,), vjp, "max")


# ---------------------------------------------------------------------------
# structural ops
# ---------------------------------------------------------------------------

def row(x, i: int) -> Tensor:
    x = as_tensor(x)
    out = x.data[i]

    def vjp(g):
        gx = np.zeros(x.shape)
        gx[i] = g
        return (gx,)

    return _make(out, (x,), vjp, "row")


def cols(x, idx) -> Tensor:
    """Gather columns of a 2-D tensor; cotangent scatter-adds (safe for repeats)."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    out = x.data[:, idx]

    def vjp(g):
        gx = np.zeros(x.shape)
        np.add.at(gx, (slice(None), idx), g)
        return (gx,)

    return _make(out, (x,), vjp, "cols")


def elem(x, i: int) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(-1)[i]

    def vjp(g):
        gx = np.zeros(x.shape)
        gx.reshape(-1)[i] = g
        return (gx,)

    return _make(out, (x,), vjp, "elem")


def concat_cols(parts: Iterable) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    widths = [p.shape[1] for p in parts]
    out = np.concatenate([p.data for p in parts], axis=1)
    offsets = np.cumsum([0] + widths)

    def vjp(g):
        return tuple(g[:, offsets[i]:offsets[i + 1]] for i in range(len(parts)))

    return _make(out, parts, vjp, "concat_cols")


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out = x.data.reshape(shape)

    def vjp(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), vjp, "reshape")


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _toposort(root: Tensor) -> list[Tensor]:
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every tensor with requires_grad reachable from ``loss``.

    Repeated calls without zeroing accumulate gradients.
    """
    if not isinstance(loss, Tensor) or loss.size != 1:
        raise ContractError("backward requires a scalar tensor")
    if not loss.requires_grad:
        return
    order = _toposort(loss)
    carried: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = carried.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = np.zeros_like(node.data)
        node.grad = node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.requires_grad or pg is None:
                continue
            acc = carried.get(id(p))
            carried[id(p)] = pg if acc is None else acc + pg


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def grad_check_params(loss_fn: Callable[[], Tensor], params: Sequence[Tensor],
                      step: float = 1e-5) -> float:
    """Max relative error of reverse-mode grads of ``loss_fn()`` w.r.t. ``params``.

    ``loss_fn`` rebuilds the graph on each call and must read the parameter
    tensors in place; coordinates are perturbed one at a time for the
    central-difference reference.
    """
    if step <= 0:
        raise ContractError("grad_check_params requires step > 0")
    zero_grads(params)
    backward(loss_fn())
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
                for p in params]
    zero_grads(params)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn().item()
            flat[i] = orig - step
            lo = loss_fn().item()
            flat[i] = orig
            numeric = (hi - lo) / (2.0 * step)
            err = abs(gflat[i] - numeric) / max(1.0, abs(numeric))
            if np.isnan(err):
                return float("nan")
            worst = max(worst, float(err))
    return worst


def grad_check(f: Callable[[Tensor], Tensor], point: Tensor, step: float = 1e-5) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    Relative error per coordinate is |analytic - numeric| / max(1, |numeric|).
    """
    if step <= 0:
        raise ContractError("grad_check requires step > 0")
    x = Tensor(point.data.copy(), requires_grad=True)
    out = f(x)
    if out.size != 1:
        raise ContractError("grad_check requires a scalar-valued function")
    backward(out)
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(Tensor(x.data.copy())).item()
        flat[i] = orig - step
        lo = f(Tensor(x.data.copy())).item()
        flat[i] = orig
        numeric = (hi - lo) / (2.0 * step)
        err = abs(analytic.reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
        if np.isnan(err):
            return float("nan")
        worst = max(worst, float(err))
    return worst
