"""Dense float64 tensors with reverse-mode differentiation.

The engine is deliberately small. Values are numpy arrays, every operation
records its parent tensors together with one vector-Jacobian closure per
parent, and :func:`backward` replays the implicit DAG once in reverse
topological order. There are no views, no in-place updates of recorded
tensors, and no dtype other than float64, which keeps runs bitwise
reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense float64 array plus the bookkeeping reverse mode needs.

    `requires_grad` is sticky: any tensor computed from a trainable one is
    itself marked, so the backward pass can skip constant subgraphs.
    """

    __slots__ = ("values", "grad", "requires_grad", "name", "_parents", "_vjps", "_op")

    def __init__(self, values, requires_grad=False, name=None, *, _parents=(), _vjps=(), _op="leaf"):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self.name = name
        self._parents = tuple(_parents)
        self._vjps = tuple(_vjps)
        self._op = _op

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    @property
    def T(self):
        return transpose(self)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def __repr__(self):
        return f"Tensor({self.name or self._op}, shape={self.shape})"

    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_as_tensor(other)))

    def __rsub__(self, other):
        return add(_as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __truediv__(self, c):
        if isinstance(c, Tensor):
            raise TypeError("tensor / tensor division is not supported; multiply by a reciprocal")
        return mul(self, _as_tensor(1.0 / float(c)))

    def __getitem__(self, key):
        return take(self, key)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def tanh(self):
        return tanh(self)

    def reshape(self, *shape):
        return reshape(self, *shape)


def tensor(data, requires_grad=False, name=None) -> Tensor:
    """Make a leaf tensor from `data`, copying so the caller keeps ownership."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=requires_grad, name=name)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _make(values, parents, vjps, op) -> Tensor:
    return Tensor(values, _parents=parents, _vjps=vjps, _op=op)


# ---------------------------------------------------------------------------
# primitive operations
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs two matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul got incompatible shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    return _make(av @ bv, (a, b), (lambda g: g @ bv.T, lambda g: av.T @ g), "matmul")


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Inner product of two 1-D tensors, returning a scalar tensor."""
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise ShapeError(f"dot needs two equal-length vectors, got shapes {a.shape} and {b.shape}")
    av, bv = a.values, b.values
    return _make(np.asarray(av @ bv), (a, b), (lambda g: g * bv, lambda g: g * av), "dot")


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.values + b.values,
        (a, b),
        (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
        "add",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.values, b.values
    return _make(
        av * bv,
        (a, b),
        (lambda g: _unbroadcast(g * bv, a.shape), lambda g: _unbroadcast(g * av, b.shape)),
        "mul",
    )


def neg(a: Tensor) -> Tensor:
    return _make(-a.values, (a,), (lambda g: -g,), "neg")


def transpose(a: Tensor) -> Tensor:
    return _make(a.values.T, (a,), (lambda g: g.T,), "transpose")


def reshape(a: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.shape
    return _make(a.values.reshape(shape), (a,), (lambda g: g.reshape(old),), "reshape")


def take(a: Tensor, key) -> Tensor:
    """Index with numpy basic or integer-array indexing; gradients scatter-add."""
    values = np.array(a.values[key])

    def vjp(g):
        out = np.zeros_like(a.values)
        np.add.at(out, key, g)
        return out

    return _make(values, (a,), (vjp,), "take")


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows by integer index; repeated indices accumulate gradients."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError(f"take_rows needs a flat index list, got shape {idx.shape}")
    if a.ndim < 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.shape[0])):
        raise ShapeError(f"take_rows index out of range for {a.shape[0]} rows")
    return take(a, idx)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    values = a.values.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape)

    return _make(values, (a,), (vjp,), "sum")


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    values = a.values.mean(axis=axis, keepdims=keepdims)
    count = a.size if axis is None else a.shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g / count, a.shape)

    return _make(values, (a,), (vjp,), "mean")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.values)
    return _make(out, (a,), (lambda g: g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.values), (a,), (lambda g: g / a.values,), "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return _make(out, (a,), (lambda g: g * (1.0 - out * out),), "tanh")


def concat(tensors, axis=0) -> Tensor:
    """Concatenate along `axis`; the gradient is sliced back to each input."""
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    ax = axis if axis >= 0 else ndim + axis
    values = np.concatenate([t.values for t in tensors], axis=ax)
    vjps = []
    start = 0
    for t in tensors:
        width = t.shape[ax]
        key = tuple(slice(None) if d != ax else slice(start, start + width) for d in range(ndim))
        vjps.append(lambda g, key=key: g[key])
        start += width
    return _make(values, tuple(tensors), tuple(vjps), "concat")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a matrix; each output row sums to one."""
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows needs a matrix, got shape {x.shape}")
    shifted = x.values - x.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        s = (g * y).sum(axis=1, keepdims=True)
        return y * (g - s)

    return _make(y, (x,), (vjp,), "softmax_rows")


def masked_softmax_rows(x: Tensor, mask: np.ndarray) -> Tensor:
    """Row-wise softmax restricted to `mask`; excluded entries are exactly zero.

    `mask` is a constant boolean matrix of the same shape as `x`. Every row
    must permit at least one entry.
    """
    if x.ndim != 2:
        raise ShapeError(f"masked_softmax_rows needs a matrix, got shape {x.shape}")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match input shape {x.shape}")
    rows_ok = mask.any(axis=1)
    if not rows_ok.all():
        bad = int(np.flatnonzero(~rows_ok)[0])
        raise ShapeError(f"attention row {bad} permits no entries")
    xm = np.where(mask, x.values, -np.inf)
    e = np.exp(xm - xm.max(axis=1, keepdims=True))
    y = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        s = (g * y).sum(axis=1, keepdims=True)
        return y * (g - s)

    return _make(y, (x,), (vjp,), "masked_softmax_rows")


def logsumexp_rows(x: Tensor) -> Tensor:
    """Row-wise log(sum(exp(x))) as an (m, 1) column, stabilized by the row max."""
    if x.ndim != 2:
        raise ShapeError(f"logsumexp_rows needs a matrix, got shape {x.shape}")
    m = x.values.max(axis=1, keepdims=True)
    out = m + np.log(np.exp(x.values - m).sum(axis=1, keepdims=True))

    def vjp(g):
        return g * np.exp(x.values - out)

    return _make(out, (x,), (vjp,), "logsumexp_rows")


def elu(x: Tensor) -> Tensor:
    """Exponential linear unit with unit negative scale."""
    xv = x.values
    pos = xv >= 0
    neg_exp = np.exp(np.minimum(xv, 0.0))
    values = np.where(pos, xv, neg_exp - 1.0)
    slope = np.where(pos, 1.0, neg_exp)
    return _make(values, (x,), (lambda g: g * slope,), "elu")


def leaky_relu(x: Tensor, slope: float) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ConfigError(f"leaky_relu slope must lie strictly between 0 and 1, got {slope}")
    xv = x.values
    factor = np.where(xv >= 0, 1.0, slope)
    return _make(xv * factor, (x,), (lambda g: g * factor,), "leaky_relu")


def dropout(x: Tensor, rate: float, training: bool, seed: int) -> Tensor:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Outside training, or at rate 0, the input tensor is returned unchanged.
    The mask is drawn from a generator seeded with `seed` alone, so equal
    seeds give equal masks.
    """
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    keep = np.random.default_rng(seed).random(x.shape) >= rate
    scale = 1.0 / (1.0 - rate)
    factor = keep * scale
    return _make(x.values * factor, (x,), (lambda g: g * factor,), "dropout")


class SeedStream:
    """Deterministic stream of integer seeds derived from a root key."""

    def __init__(self, *key):
        self._rng = np.random.default_rng(list(key))

    def next(self) -> int:
        return int(self._rng.integers(0, 2**63))


# ---------------------------------------------------------------------------
# reverse pass
# ---------------------------------------------------------------------------

@dataclass
class ComputationRecord:
    """Topologically ordered snapshot of the graph below a root tensor.

    `nodes` lists every reachable tensor with producers before consumers;
    `parameters` are the trainable leaves among them, in first-visit order.
    """

    nodes: list
    parameters: list


def record(root: Tensor) -> ComputationRecord:
    """Collect the graph below `root` iteratively (graphs outgrow the recursion limit)."""
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, ready = stack.pop()
        if ready:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    params = [t for t in order if t.requires_grad and not t._parents]
    return ComputationRecord(nodes=order, parameters=params)


def backward(root: Tensor, rec: ComputationRecord | None = None) -> ComputationRecord:
    """Reverse-mode pass from a scalar `root`; fills `.grad` on trainable tensors.

    Each node is visited exactly once, in reverse topological order, and
    accumulation order is fixed by the recorded graph, so gradients are
    bitwise reproducible.
    """
    if root.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if rec is None:
        rec = record(root)
    pending = {id(root): np.ones_like(root.values)}
    for node in reversed(rec.nodes):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g
        for parent, vjp in zip(node._parents, node._vjps):
            if not parent.requires_grad:
                continue
            contribution = vjp(g)
            prev = pending.get(id(parent))
            pending[id(parent)] = contribution if prev is None else prev + contribution
    return rec


def gradients(root: Tensor, params: dict) -> dict:
    """Gradients of scalar `root` for a name -> Tensor mapping.

    Parameters the root does not depend on get zero gradients rather than
    stale ones from an earlier pass.
    """
    for p in params.values():
        p.grad = None
    backward(root)
    return {
        name: (p.grad if p.grad is not None else np.zeros_like(p.values))
        for name, p in params.items()
    }
