"""Reverse-mode automatic differentiation over dense float64 arrays.

A Tape records primitive applications in execution order (which is already
topological); backward() replays it once in reverse. Tensors are thin
wrappers around numpy arrays; parameters are Tensors with
``requires_grad=True`` collected in a Params registry.

Shape rules:
  * elementwise ops (add/sub/mul/div/relu/log/sqrt/huber) follow numpy
    broadcasting; gradients are summed back over broadcast axes;
  * matmul and transpose are strictly 2-D;
  * softmax normalizes along one axis; max_pool_over_set reduces rows of a
    2-D tensor into per-set maxima; take/tile_rows operate on rows.

Anything beyond these rules (higher-rank matmul, fancy indexing) is out of
scope on purpose.
"""

import threading

import numpy as np

from . import kernels
from .errors import EmptyReduction, NotScalarLoss, ShapeMismatch

_state = threading.local()


def _active_tape():
    return getattr(_state, "tape", None)


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        if _active_tape() is not None:
            raise RuntimeError("nested tapes are not supported")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tape = None
        return False


class _Node:
    __slots__ = ("out", "parents", "vjps")

    def __init__(self, out, parents, vjps):
        self.out = out
        self.parents = parents
        self.vjps = vjps


class Tensor:
    """Dense float64 array, optionally tracked for gradients."""

    __slots__ = ("data", "requires_grad", "tape")

    def __init__(self, data, requires_grad=False, tape=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(x):
    """Wrap an array-like as an untracked Tensor."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _coerce(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_data, parents, vjps):
    requires = any(p.requires_grad for p in parents)
    tape = _active_tape()
    out = Tensor(out_data, requires_grad=requires, tape=tape if requires else None)
    if requires and tape is not None:
        tape.nodes.append(_Node(out, tuple(parents), tuple(vjps)))
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# --- elementwise primitives ---

def add(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from e
    return _record(out, (a, b), (
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(g, b.data.shape),
    ))


def sub(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        out = a.data - b.data
    except ValueError as e:
        raise ShapeMismatch(f"sub: {a.shape} vs {b.shape}") from e
    return _record(out, (a, b), (
        lambda g: _unbroadcast(g, a.data.shape),
        lambda g: _unbroadcast(-g, b.data.shape),
    ))


def mul(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from e
    return _record(out, (a, b), (
        lambda g: _unbroadcast(g * b.data, a.data.shape),
        lambda g: _unbroadcast(g * a.data, b.data.shape),
    ))


def div(a, b):
    a, b = _coerce(a), _coerce(b)
    try:
        out = a.data / b.data
    except ValueError as e:
        raise ShapeMismatch(f"div: {a.shape} vs {b.shape}") from e
    return _record(out, (a, b), (
        lambda g: _unbroadcast(g / b.data, a.data.shape),
        lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
    ))


def neg(a):
    a = _coerce(a)
    return _record(-a.data, (a,), (lambda g: -g,))


def relu(a):
    a = _coerce(a)
    mask = a.data > 0.0
    return _record(np.where(mask, a.data, 0.0), (a,), (lambda g: g * mask,))


def log(a):
    a = _coerce(a)
    return _record(np.log(a.data), (a,), (lambda g: g / a.data,))


def sqrt(a):
    a = _coerce(a)
    out = np.sqrt(a.data)
    return _record(out, (a,), (lambda g: g * 0.5 / out,))


def huber(a, delta):
    """Elementwise Huber: 0.5 r^2 inside |r| <= delta, linear outside."""
    a = _coerce(a)
    r = a.data
    absr = np.abs(r)
    out = np.where(absr <= delta, 0.5 * r * r, delta * (absr - 0.5 * delta))
    return _record(out, (a,), (lambda g: g * np.clip(r, -delta, delta),))


# --- linear algebra ---

def matmul(a, b):
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatch(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatch(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    return _record(a.data @ b.data, (a, b), (
        lambda g: g @ b.data.T,
        lambda g: a.data.T @ g,
    ))


def transpose(a):
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"transpose expects a 2-D tensor, got {a.shape}")
    return _record(a.data.T.copy(), (a,), (lambda g: g.T,))


# --- shape manipulation ---

def reshape(a, shape):
    a = _coerce(a)
    orig = a.data.shape
    return _record(a.data.reshape(shape), (a,), (lambda g: g.reshape(orig),))


def concat(tensors, axis=0):
    ts = [_coerce(t) for t in tensors]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum(sizes)[:-1]

    def make_vjp(i):
        return lambda g: np.split(g, offsets, axis=axis)[i]

    return _record(out, tuple(ts), tuple(make_vjp(i) for i in range(len(ts))))


def take(a, indices):
    """Gather rows. Gradient scatter-adds, so repeated indices are fine."""
    a = _coerce(a)
    idx = np.asarray(indices, dtype=np.int64)
    shape = a.data.shape

    def vjp(g):
        gx = np.zeros(shape)
        np.add.at(gx, idx, g)
        return gx

    return _record(a.data[idx], (a,), (vjp,))


def tile_rows(a, n):
    """Repeat a single-row (1, d) tensor into (n, d)."""
    a = _coerce(a)
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeMismatch(f"tile_rows expects shape (1, d), got {a.shape}")
    out = np.repeat(a.data, n, axis=0)
    return _record(out, (a,), (lambda g: g.sum(axis=0, keepdims=True),))


# --- reductions ---

def reduce_sum(a, axis=None, keepdims=False):
    a = _coerce(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)
    shape = a.data.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _record(out, (a,), (vjp,))


def reduce_mean(a, axis=None, keepdims=False):
    a = _coerce(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    shape = a.data.shape
    count = a.data.size if axis is None else shape[axis]

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape) / count

    return _record(out, (a,), (vjp,))


def softmax(a, axis=-1):
    """Numerically stable softmax; rows along ``axis`` sum to 1."""
    a = _coerce(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return out * (g - (g * out).sum(axis=axis, keepdims=True))

    return _record(out, (a,), (vjp,))


def max_pool_over_set(a, mask=None, set_ids=None, n_sets=1):
    """Coordinate-wise max over the rows of each set.

    a: (N, d). ``set_ids`` assigns each row to a set in [0, n_sets); None
    means one set. ``mask`` (N,) bool excludes rows entirely — a masked row
    can never win the max. Raises EmptyReduction if a set has no valid row.
    The gradient routes to exactly one argmax row per (set, column), ties
    broken by the lowest row index.
    """
    a = _coerce(a)
    if a.data.ndim != 2:
        raise ShapeMismatch(f"max_pool_over_set expects 2-D input, got {a.shape}")
    n = a.data.shape[0]
    d = a.data.shape[1]
    if set_ids is None:
        ids = np.zeros(n, dtype=np.int64)
        n_sets = 1
    else:
        ids = np.asarray(set_ids, dtype=np.int64)
    valid = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    out, argrow = kernels.segment_max(a.data, ids, n_sets, valid)
    if (argrow[:, 0] < 0).any():
        empty = int(np.flatnonzero(argrow[:, 0] < 0)[0])
        raise EmptyReduction(f"set {empty} has no valid member")
    cols = np.tile(np.arange(d), n_sets)
    shape = a.data.shape

    def vjp(g):
        gx = np.zeros(shape)
        np.add.at(gx, (argrow.ravel(), cols), g.ravel())
        return gx

    return _record(out, (a,), (vjp,))


# --- composites used by the encoder and heads ---

def affine(x, w, b):
    return add(matmul(x, w), b)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize along the last axis, then scale and shift."""
    mu = reduce_mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = reduce_mean(mul(xc, xc), axis=-1, keepdims=True)
    normed = div(xc, sqrt(add(var, eps)))
    return add(mul(normed, gain), bias)


def mlp2(x, params, prefix):
    """Two affine layers with layer norm + ReLU after the hidden one."""
    h = affine(x, params[f"{prefix}.w1"], params[f"{prefix}.b1"])
    h = relu(layer_norm(h, params[f"{prefix}.ln_g"], params[f"{prefix}.ln_b"]))
    return affine(h, params[f"{prefix}.w2"], params[f"{prefix}.b2"])


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "neg": neg,
    "relu": relu,
    "log": log,
    "sqrt": sqrt,
    "huber": huber,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "take": take,
    "tile_rows": tile_rows,
    "reduce_sum": reduce_sum,
    "reduce_mean": reduce_mean,
    "softmax": softmax,
    "max_pool_over_set": max_pool_over_set,
    "layer_norm": layer_norm,
}


def primitive_forward(op, *args, **kwargs):
    """Apply a primitive by id (registry dispatch)."""
    if op not in PRIMITIVES:
        raise ShapeMismatch(f"unknown primitive '{op}'")
    return PRIMITIVES[op](*args, **kwargs)


# --- parameters ---

class Params:
    """Named collection of parameter Tensors with stable iteration order."""

    def __init__(self):
        self._items = {}

    def add(self, name, array):
        if name in self._items:
            raise ValueError(f"duplicate parameter '{name}'")
        t = Tensor(np.array(array, dtype=np.float64), requires_grad=True)
        self._items[name] = t
        return t

    def __getitem__(self, name):
        return self._items[name]

    def __contains__(self, name):
        return name in self._items

    def __len__(self):
        return len(self._items)

    def names(self):
        return list(self._items)

    def items(self):
        return self._items.items()

    def tensors(self):
        return list(self._items.values())

    def as_arrays(self):
        return {k: v.data.copy() for k, v in self._items.items()}

    def load_arrays(self, arrays):
        for name, value in arrays.items():
            t = self._items[name]
            if t.data.shape != value.shape:
                raise ShapeMismatch(
                    f"parameter '{name}': expected {t.data.shape}, got {value.shape}")
            t.data = np.asarray(value, dtype=np.float64).copy()


def glorot(rng, fan_in, fan_out, shape=None):
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, size=shape)


def init_mlp2(params, prefix, n_in, hidden, n_out, rng):
    params.add(f"{prefix}.w1", glorot(rng, n_in, hidden))
    params.add(f"{prefix}.b1", np.zeros(hidden))
    params.add(f"{prefix}.ln_g", np.ones(hidden))
    params.add(f"{prefix}.ln_b", np.zeros(hidden))
    params.add(f"{prefix}.w2", glorot(rng, hidden, n_out))
    params.add(f"{prefix}.b2", np.zeros(n_out))


# --- backward pass ---

def backward(tape, loss):
    """Compute gradients of a scalar ``loss`` w.r.t. everything on ``tape``.

    Returns a dict keyed by Tensor identity holding the accumulated
    gradients of the leaf tensors (parameters). Each tape node is visited
    exactly once; the result is bit-deterministic for identical tapes.
    """
    if not isinstance(loss, Tensor) or loss.data.size != 1:
        raise NotScalarLoss("backward requires a scalar loss tensor")
    grads = {loss: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(node.out, None)
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.requires_grad:
                continue
            pg = vjp(g)
            if parent in grads:
                grads[parent] = grads[parent] + pg
            else:
                grads[parent] = pg
    return grads


def grads_for(params, grads):
    """Align a backward() result with Params; absent entries are zeros."""
    out = {}
    for name, tensor in params.items():
        g = grads.get(tensor)
        out[name] = np.zeros_like(tensor.data) if g is None else g
    return out


# --- finite-difference verification ---

class GradCheckEntry:
    __slots__ = ("name", "max_rel_err", "passed")

    def __init__(self, name, max_rel_err, passed):
        self.name = name
        self.max_rel_err = max_rel_err
        self.passed = passed


class GradCheckReport:
    def __init__(self, entries, tol):
        self.entries = entries
        self.tol = tol

    @property
    def passed(self):
        return all(e.passed for e in self.entries)

    def worst(self):
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def lines(self):
        out = []
        for e in self.entries:
            status = "ok" if e.passed else "FAIL"
            out.append(f"{status:4s} {e.name:40s} max_rel_err={e.max_rel_err:.3e}")
        return out


def grad_check(f, params, h=1e-5, tol=1e-4):
    """Compare analytic gradients of ``f(params)`` against central
    finite differences.

    ``f`` must build a fresh scalar loss from ``params`` on the active tape
    and be deterministic. Relative error per coordinate is
    |a - n| / max(|a|, |n|, 1e-6); the report carries the per-parameter max.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    with Tape() as tape:
        loss = f(params)
    analytic = grads_for(params, backward(tape, loss))

    entries = []
    for name, tensor in params.items():
        a = analytic[name]
        num = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f(params).data)
            flat[i] = orig - h
            f_minus = float(f(params).data)
            flat[i] = orig
            nflat[i] = (f_plus - f_minus) / (2.0 * h)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(num)), 1e-6)
        rel = np.abs(a - num) / denom
        max_rel = float(rel.max()) if rel.size else 0.0
        entries.append(GradCheckEntry(name, max_rel, max_rel < tol))
    return GradCheckReport(entries, tol)
