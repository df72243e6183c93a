"""Dense-tensor reverse-mode automatic differentiation.

A `Tensor` wraps a numpy array and, while gradients are enabled, records the
op that produced it (parents + a backward closure).  `backward` runs a
topological reverse sweep from a scalar loss and returns gradients for a set
of named parameters; the graph is freed afterwards unless `retain_graph` is
set.  Ops cover exactly what the models need: affine maps, recurrent cells,
elementwise nonlinearities, reductions, concatenation/slicing, softmax and a
straight-through one-hot primitive.  No hidden RNG draws happen inside ops;
noise is always an explicit input.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "no_grad",
    "is_grad_enabled",
    "tensor",
    "zeros",
    "backward",
    "grad",
    "concat",
    "stack",
    "narrow",
    "matmul",
    "relu",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "softplus",
    "sqrt",
    "square",
    "maximum_scalar",
    "clip_scalar",
    "minimum",
    "softmax",
    "logsumexp",
    "stop_grad",
    "straight_through",
]

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def is_grad_enabled() -> bool:
    return _GRAD_ENABLED


class GradError(RuntimeError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad=False, _parents=(), _bwd=None):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=np.float32)
        self.data = data
        self.requires_grad = bool(requires_grad)
        self._parents = _parents
        self._bwd = _bwd

    # -- inspection ------------------------------------------------------
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

    @property
    def on_tape(self) -> bool:
        return self._bwd is not None or self.requires_grad

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, on_tape={self.on_tape})"

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_as_tensor(other))

    def __rsub__(self, other):
        return add(_as_tensor(other), -self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float32))


def tensor(data, requires_grad=False, dtype=np.float32) -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=requires_grad)


def zeros(shape, dtype=np.float32) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype))


def _node(data, parents, bwd) -> Tensor:
    """Create an op output; records the graph only while grads are enabled."""
    if _GRAD_ENABLED and any(p.on_tape for p in parents):
        return Tensor(data, _parents=parents, _bwd=bwd)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum `g` down to `shape` (reverses numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- primitive ops -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data

    def bwd(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _node(out, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data @ b.data

    def bwd(g):
        ad = a.data if a.ndim > 1 else a.data[None, :]
        bd = b.data if b.ndim > 1 else b.data[:, None]
        g2 = g
        if a.ndim == 1:
            g2 = g2[None, ...]
        if b.ndim == 1:
            g2 = g2[..., None]
        ga = g2 @ bd.T
        gb = ad.T @ g2
        return ga.reshape(a.shape), gb.reshape(b.shape)

    return _node(out, (a, b), bwd)


def tsum(t: Tensor, axis=None, keepdims=False) -> Tensor:
    t = _as_tensor(t)
    out = t.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, t.shape).astype(t.dtype, copy=False),)

    return _node(out, (t,), bwd)


def tmean(t: Tensor, axis=None, keepdims=False) -> Tensor:
    t = _as_tensor(t)
    n = t.size if axis is None else t.shape[axis]
    return mul(tsum(t, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(t: Tensor, shape) -> Tensor:
    t = _as_tensor(t)
    out = t.data.reshape(shape)

    def bwd(g):
        return (g.reshape(t.shape),)

    return _node(out, (t,), bwd)


def relu(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.maximum(t.data, 0.0)

    def bwd(g):
        return (g * (t.data > 0),)

    return _node(out, (t,), bwd)


def tanh(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.tanh(t.data)

    def bwd(g):
        return (g * (1.0 - out * out),)

    return _node(out, (t,), bwd)


def sigmoid(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    x = t.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bwd(g):
        return (g * out * (1.0 - out),)

    return _node(out, (t,), bwd)


def exp(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.exp(t.data)

    def bwd(g):
        return (g * out,)

    return _node(out, (t,), bwd)


def log(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.log(t.data)

    def bwd(g):
        return (g / t.data,)

    return _node(out, (t,), bwd)


def softplus(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.logaddexp(0.0, t.data).astype(t.dtype, copy=False)

    def bwd(g):
        x = t.data
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return (g * s,)

    return _node(out, (t,), bwd)


def sqrt(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = np.sqrt(t.data)

    def bwd(g):
        return (g * 0.5 / out,)

    return _node(out, (t,), bwd)


def square(t: Tensor) -> Tensor:
    t = _as_tensor(t)
    out = t.data * t.data

    def bwd(g):
        return (g * 2.0 * t.data,)

    return _node(out, (t,), bwd)


def maximum_scalar(t: Tensor, c: float) -> Tensor:
    """Elementwise max(t, c); gradient is zero where the constant wins."""
    t = _as_tensor(t)
    out = np.maximum(t.data, c)

    def bwd(g):
        return (g * (t.data > c),)

    return _node(out, (t,), bwd)


def clip_scalar(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero outside the interval."""
    t = _as_tensor(t)
    out = np.clip(t.data, lo, hi)

    def bwd(g):
        return (g * ((t.data > lo) & (t.data < hi)),)

    return _node(out, (t,), bwd)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise min of two tensors; subgradient goes to the smaller side."""
    a, b = _as_tensor(a), _as_tensor(b)
    take_a = a.data <= b.data
    out = np.where(take_a, a.data, b.data)

    def bwd(g):
        return _unbroadcast(g * take_a, a.shape), _unbroadcast(g * ~take_a, b.shape)

    return _node(out, (a, b), bwd)


def concat(ts, axis=-1) -> Tensor:
    ts = [_as_tensor(t) for t in ts]
    out = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(out, tuple(ts), bwd)


def stack(ts, axis=0) -> Tensor:
    ts = [_as_tensor(t) for t in ts]
    out = np.stack([t.data for t in ts], axis=axis)

    def bwd(g):
        moved = np.moveaxis(g, axis, 0)
        return tuple(moved[i] for i in range(len(ts)))

    return _node(out, tuple(ts), bwd)


def narrow(t: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    t = _as_tensor(t)
    sl = [slice(None)] * t.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = t.data[sl]

    def bwd(g):
        full = np.zeros(t.shape, dtype=g.dtype)
        full[sl] = g
        return (full,)

    return _node(out, (t,), bwd)


def softmax(t: Tensor, axis=-1) -> Tensor:
    t = _as_tensor(t)
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _node(out, (t,), bwd)


def logsumexp(t: Tensor, axis=-1, keepdims=False) -> Tensor:
    t = _as_tensor(t)
    m = t.data.max(axis=axis, keepdims=True)
    e = np.exp(t.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out = (m + np.log(s))
    soft = e / s
    if not keepdims:
        out = out.squeeze(axis)

    def bwd(g):
        g = np.asarray(g)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)

    return _node(out, (t,), bwd)


def stop_grad(t: Tensor) -> Tensor:
    return Tensor(_as_tensor(t).data)


def straight_through(logits: Tensor, onehot: np.ndarray) -> Tensor:
    """Forward: the given one-hot, bit-exact.  Backward: softmax gradient.

    The backward pass substitutes the Jacobian of softmax(logits), i.e. the
    incoming gradient is routed as if the op had returned the probabilities.
    """
    logits = _as_tensor(logits)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=-1, keepdims=True)

    def bwd(g):
        dot = (g * probs).sum(axis=-1, keepdims=True)
        return (probs * (g - dot),)

    return _node(onehot.astype(logits.dtype, copy=False), (logits,), bwd)


# -- reverse sweep -------------------------------------------------------

def _toposort(root: Tensor):
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
            if id(p) not in seen and p._parents:
                stack.append((p, False))
            elif id(p) not in seen:
                # leaf; still record so grads can be read off it
                seen.add(id(p))
                order.append(p)
    return order


def _sweep(loss: Tensor, retain_graph: bool):
    """Run the reverse sweep; returns a dict id(tensor) -> grad array."""
    if loss.size != 1:
        raise GradError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.on_tape:
        raise GradError("loss is not on the active tape (built under no_grad?)")
    if not np.isfinite(loss.data).all():
        raise GradError("loss is not finite")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    order = _toposort(loss)
    for node in reversed(order):
        if node._bwd is None:
            continue
        g = grads.pop(id(node), None)
        if g is None:
            continue
        parent_grads = node._bwd(g)
        for p, pg in zip(node._parents, parent_grads):
            if not p.on_tape:
                continue
            acc = grads.get(id(p))
            if acc is None:
                grads[id(p)] = pg
            else:
                grads[id(p)] = acc + pg
        if not retain_graph:
            node._bwd = None
            node._parents = ()
    return grads


def backward(loss: Tensor, params, retain_graph: bool = False):
    """Gradients of a scalar loss w.r.t. named parameters.

    `params` maps name -> Tensor.  Parameters unreachable from the loss get
    zero gradients.  Raises GradError on non-scalar loss, a loss built off
    the tape, or non-finite gradients.
    """
    items = params.items() if hasattr(params, "items") else params
    items = list(items)
    grads = _sweep(loss, retain_graph)
    out = {}
    for name, p in items:
        g = grads.get(id(p.tensor if hasattr(p, "tensor") else p))
        t = p.tensor if hasattr(p, "tensor") else p
        if g is None:
            g = np.zeros_like(t.data)
        elif not np.isfinite(g).all():
            raise GradError(f"non-finite gradient for parameter {name!r}")
        out[name] = g
    return out


def grad(loss: Tensor, wrt, retain_graph: bool = False):
    """Gradients w.r.t. an explicit list of tensors (zeros if unreachable)."""
    grads = _sweep(loss, retain_graph)
    return [grads.get(id(t), np.zeros_like(t.data)) for t in wrt]
