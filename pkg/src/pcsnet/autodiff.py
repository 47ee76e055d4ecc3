"""A small reverse-mode autodiff engine over 2-D float64 arrays.

Every value is a :class:`Tensor` holding a ``(rows, cols)`` array. Primitive
functions build the graph eagerly; :meth:`Tensor.backward` walks it once in
reverse topological order and accumulates gradients into every tensor that
requires them. Broadcasting is limited to stretching size-1 axes of 2-D
operands (bias rows, scalar factors).

    >>> x = Tensor([[1.0, 2.0, 3.0]], requires_grad=True)
    >>> reduce_sum(square(x)).backward()
    >>> x.grad
    array([[2., 4., 6.]])
"""

from dataclasses import dataclass, field

import numpy as np

from ._errors import DataError, NumericalError, ShapeError


def _as2d(data):
    a = np.array(data, dtype=np.float64)
    if a.ndim == 0:
        return a.reshape(1, 1)
    if a.ndim == 1:
        return a.reshape(1, -1)
    if a.ndim != 2:
        raise DataError("invalid-tensor", f"tensors are 2-D, got shape {a.shape}")
    return a


class Tensor:
    """A node in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = _as2d(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = "leaf"
        self._parents = ()
        self._backward = None

    @classmethod
    def _make(cls, data, parents, op, backward):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        rg = False
        for p in parents:
            if p.requires_grad:
                rg = True
                break
        out.requires_grad = rg
        if rg:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self):
        return transpose(self)

    def item(self):
        if self.data.size != 1:
            raise DataError("not-scalar", f"item() on shape {self.shape}")
        return float(self.data[0, 0])

    def numpy(self):
        return self.data.copy()

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Back-propagate from this node.

        ``grad`` defaults to 1 and may only be omitted for scalar outputs.
        Leaf gradients accumulate across calls; interior ones are reset.
        """
        if grad is None:
            if self.data.size != 1:
                raise DataError("not-scalar", f"backward() without grad on shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological(self)
        for node in order:
            if node._backward is not None:
                node.grad = None
        self._accumulate(np.broadcast_to(grad, self.shape))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scalar_mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, c):
        return scalar_mul(self, 1.0 / c)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
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
    return order


def _t(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True)


def _broadcast_shape(op, a, b):
    if a.shape == b.shape:
        return a.shape
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --- arithmetic -------------------------------------------------------------

def add(a, b):
    a, b = _t(a), _t(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(_unbroadcast(g, b.shape))

    return Tensor._make(a.data + b.data, (a, b), "add", backward)


def sub(a, b):
    a, b = _t(a), _t(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g, a.shape))
        b._accumulate(-_unbroadcast(g, b.shape))

    return Tensor._make(a.data - b.data, (a, b), "sub", backward)


def mul(a, b):
    """Elementwise product (with size-1 broadcasting)."""
    a, b = _t(a), _t(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.shape))
        b._accumulate(_unbroadcast(g * a.data, b.shape))

    return Tensor._make(a.data * b.data, (a, b), "mul", backward)


def scalar_mul(x, c):
    c = float(c)

    def backward(g):
        x._accumulate(g * c)

    return Tensor._make(x.data * c, (x,), "scalar_mul", backward)


def matmul(a, b):
    a, b = _t(a), _t(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return Tensor._make(a.data @ b.data, (a, b), "matmul", backward)


def linear(x, W, b=None, slope=None):
    """``x @ W + b`` as one node (``b`` is an optional ``(1, cols)`` row).

    With ``slope`` the result also goes through ``leaky_relu(., slope)``.
    """
    x, W = _t(x), _t(W)
    b = None if b is None else _t(b)
    if x.data.shape[1] != W.data.shape[0] or (b is not None and b.data.shape != (1, W.data.shape[1])):
        raise ShapeError("linear", x.shape, W.shape, *(() if b is None else (b.shape,)))
    out = x.data @ W.data
    if b is not None:
        out += b.data
    parents = (x, W) if b is None else (x, W, b)
    if slope is not None:
        pos = out > 0
        out = np.where(pos, out, slope * out)

    def backward(g):
        if slope is not None:
            g = np.where(pos, g, slope * g)
        if x.requires_grad:
            x._accumulate(g @ W.data.T)
        if W.requires_grad:
            W._accumulate(x.data.T @ g)
        if b is not None and b.requires_grad:
            b._accumulate(g.sum(axis=0, keepdims=True))

    return Tensor._make(out, parents, "linear", backward)


def transpose(x):
    def backward(g):
        x._accumulate(g.T)

    return Tensor._make(x.data.T.copy(), (x,), "transpose", backward)


def concat_cols(tensors):
    tensors = [_t(x) for x in tensors]
    rows = {x.shape[0] for x in tensors}
    if len(rows) != 1:
        raise ShapeError("concat_cols", *(x.shape for x in tensors))

    def backward(g):
        lo = 0
        for x in tensors:
            hi = lo + x.shape[1]
            x._accumulate(g[:, lo:hi])
            lo = hi

    return Tensor._make(np.concatenate([x.data for x in tensors], axis=1), tuple(tensors), "concat_cols", backward)


# --- elementwise nonlinearities ----------------------------------------------

def relu(x):
    mask = x.data > 0

    def backward(g):
        x._accumulate(g * mask)

    return Tensor._make(np.where(mask, x.data, 0.0), (x,), "relu", backward)


def leaky_relu(x, slope=0.2):
    # max(x, slope*x) is the leaky ramp whenever 0 <= slope <= 1
    scaled = slope * x.data
    out = np.maximum(x.data, scaled) if 0.0 <= slope <= 1.0 else np.where(x.data > 0, x.data, scaled)

    def backward(g):
        x._accumulate(np.where(x.data > 0, g, slope * g))

    return Tensor._make(out, (x,), "leaky_relu", backward)


def softplus(x):
    out = np.logaddexp(0.0, x.data)

    def backward(g):
        x._accumulate(g * (0.5 * (1.0 + np.tanh(0.5 * x.data))))

    return Tensor._make(out, (x,), "softplus", backward)


def square(x):
    def backward(g):
        x._accumulate(2.0 * g * x.data)

    return Tensor._make(x.data * x.data, (x,), "square", backward)


def sqrt(x):
    """Square root; the derivative is undefined at 0 (domain x > 0)."""
    out = np.sqrt(x.data)

    def backward(g):
        x._accumulate(0.5 * g / out)

    return Tensor._make(out, (x,), "sqrt", backward)


def exp(x):
    out = np.exp(x.data)

    def backward(g):
        x._accumulate(g * out)

    return Tensor._make(out, (x,), "exp", backward)


# --- reductions ---------------------------------------------------------------

def reduce_sum(x, axis=None):
    """Sum over everything (``(1, 1)`` result) or one axis, keeping 2-D."""
    out = x.data.sum(axis=axis, keepdims=True) if axis is not None else x.data.sum().reshape(1, 1)

    def backward(g):
        x._accumulate(np.broadcast_to(g, x.shape))

    return Tensor._make(out, (x,), "reduce_sum", backward)


def reduce_mean(x, axis=None):
    count = x.data.size if axis is None else x.shape[axis]
    return scalar_mul(reduce_sum(x, axis), 1.0 / count)


def reduce_min(x, axis=1, mask=None):
    """Minimum along ``axis`` (kept as a size-1 axis).

    Entries where ``mask`` is True are ignored. The subgradient goes entirely
    to the first minimal entry, so ties resolve to the lowest index.
    """
    vals = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if mask.all(axis=axis).any():
            raise DataError("empty-reduction", "reduce_min over a fully masked line")
        vals = np.where(mask, np.inf, vals)
    out = vals.min(axis=axis, keepdims=True)

    def backward(g):
        arg_k = np.expand_dims(np.argmin(vals, axis=axis), axis)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg_k, g, axis=axis)
        x._accumulate(full)

    return Tensor._make(out, (x,), "reduce_min", backward)


def group_max(x, group):
    """Max over consecutive blocks of ``group`` rows: ``(n*group, c) -> (n, c)``.

    Ties route the gradient to the first row of the block that attains it.
    """
    rows, cols = x.shape
    if group < 1 or rows % group:
        raise ShapeError(f"group_max(group={group})", x.shape)
    blocks = x.data.reshape(rows // group, group, cols)
    out = blocks.max(axis=1)

    def backward(g):
        arg = np.argmax(blocks, axis=1)
        full = np.zeros_like(blocks)
        np.put_along_axis(full, arg[:, None, :], g[:, None, :], axis=1)
        x._accumulate(full.reshape(rows, cols))

    return Tensor._make(out, (x,), "group_max", backward)


# --- indexing and geometry helpers ------------------------------------------------

def gather_rows(x, indices):
    """Rows of ``x`` at ``indices`` (repeats allowed). Indices carry no gradient."""
    indices = np.asarray(indices, dtype=np.intp).reshape(-1)
    if len(indices) and (indices.min() < -x.shape[0] or indices.max() >= x.shape[0]):
        raise ShapeError("gather_rows(index out of range)", x.shape)

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, indices, g)
        x._accumulate(full)

    return Tensor._make(x.data[indices], (x,), "gather_rows", backward)


def repeat_rows(x, times):
    """Each row repeated ``times`` times in place: ``(n, c) -> (n*times, c)``."""
    n, c = x.shape

    def backward(g):
        x._accumulate(g.reshape(n, times, c).sum(axis=1))

    return Tensor._make(np.repeat(x.data, times, axis=0), (x,), "repeat_rows", backward)


def edge_features(x, neighbors, group):
    """``[x_j - x_i, x_i]`` for every point ``i`` and each of its ``group``
    neighbors ``j``: ``(n, c) -> (n*group, 2c)``.

    ``neighbors`` is the flattened ``(n*group,)`` index table, rows of the
    same point consecutive. Same values as
    ``concat_cols([gather_rows(x, nb) - repeat_rows(x, group), repeat_rows(x, group)])``
    in a single node.
    """
    n, c = x.shape
    neighbors = np.asarray(neighbors, dtype=np.intp).reshape(-1)
    if len(neighbors) != n * group or (n and (neighbors.min() < 0 or neighbors.max() >= n)):
        raise ShapeError(f"edge_features(group={group})", x.shape, neighbors.shape)
    xi = np.repeat(x.data, group, axis=0)
    out = np.concatenate([x.data[neighbors] - xi, xi], axis=1)

    def backward(g):
        ga = g[:, :c]
        full = (g[:, c:] - ga).reshape(n, group, c).sum(axis=1)
        np.add.at(full, neighbors, ga)
        x._accumulate(full)

    return Tensor._make(out, (x,), "edge_features", backward)


def pairwise_sqdist(a, b):
    """``D[i, j] = |a_i - b_j|^2`` for ``a`` of shape (r, d) and ``b`` of shape (s, d).

    Computed from explicit differences (no expansion trick), so coincident
    points give exactly 0.
    """
    if a.shape[1] != b.shape[1]:
        raise ShapeError("pairwise_sqdist", a.shape, b.shape)
    diff = a.data[:, None, :] - b.data[None, :, :]
    out = diff[..., 0] * diff[..., 0]
    for c in range(1, diff.shape[2]):
        out = out + diff[..., c] * diff[..., c]

    def backward(g):
        w = 2.0 * g[..., None] * diff
        if a.requires_grad:
            a._accumulate(w.sum(axis=1))
        if b.requires_grad:
            b._accumulate(-w.sum(axis=0))

    return Tensor._make(out, (a, b), "pairwise_sqdist", backward)


def t_softmax_rows(logits, t):
    """Row softmax of ``logits / t**2``.

    Rows approach one-hot vectors as ``t -> 0``; ``t`` itself is a schedule
    constant and receives no gradient.
    """
    t = float(t)
    if not t > 0.0:
        raise DataError("invalid-temperature", f"t must be > 0, got {t}")
    inv = 1.0 / (t * t)
    z = logits.data * inv
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        logits._accumulate(inv * s * (g - (g * s).sum(axis=1, keepdims=True)))

    return Tensor._make(s, (logits,), "t_softmax_rows", backward)


# --- finite-difference checking ---------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    tol: float
    per_input: list = field(default_factory=list)
    worst: tuple = None

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        return f"gradcheck {status}: max rel error {self.max_rel_error:.3e} (tol {self.tol:g})"


def _scalar(out):
    if not isinstance(out, Tensor) or out.data.size != 1:
        raise DataError("not-scalar", "grad_check needs a function returning a (1, 1) tensor")
    v = out.item()
    if not np.isfinite(v):
        raise NumericalError("non-finite", f"forward pass produced {v}")
    return v


def grad_check(f, inputs, step=1e-5, tol=1e-4):
    """Compare reverse-mode gradients of scalar ``f(*tensors)`` with central
    differences on every entry of every input.

    Relative error per entry is ``|a - b| / max(|a|, |b|, 1e-8)``.
    """
    arrays = [_as2d(getattr(x, "data", x)) for x in inputs]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    _scalar(out := f(*leaves))
    out.backward()
    analytic = [np.zeros_like(a) if x.grad is None else x.grad for a, x in zip(arrays, leaves)]

    # probes reuse one set of constant tensors, nudging a single entry in place
    probes = [Tensor(a) for a in arrays]
    worst_err, worst, per_input = 0.0, None, []
    for which, base in enumerate(arrays):
        data = probes[which].data
        numeric = np.empty_like(base)
        for idx in np.ndindex(base.shape):
            original = data[idx]
            data[idx] = original + step
            up = _scalar(f(*probes))
            data[idx] = original - step
            down = _scalar(f(*probes))
            data[idx] = original
            numeric[idx] = (up - down) / (2.0 * step)
        a, b = analytic[which], numeric
        rel = np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
        err = float(rel.max()) if rel.size else 0.0
        per_input.append(err)
        if err >= worst_err:
            worst_err = err
            worst = (which, np.unravel_index(int(np.argmax(rel)), rel.shape) if rel.size else None)
    return GradCheckReport(worst_err, worst_err < tol, tol, per_input, worst)
