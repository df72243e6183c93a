"""Parameter store and the network building blocks used by every model.

Parameters are named by slash-separated paths ("agent0/encoder/l1/w"); the
name is the checkpoint identity.  Networks are functional: a builder
registers parameters in a `Params` store, the matching forward function
reads them back by prefix.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor


class Parameter:
    """Named trainable tensor."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, tensor: Tensor):
        self.name = name
        self.tensor = tensor

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


class Params:
    """Flat name -> Parameter map with init helpers and prefix views."""

    def __init__(self, rng: Rng | None = None, dtype=np.float32):
        self._store: dict[str, Parameter] = {}
        self.rng = rng if rng is not None else Rng(0)
        self.dtype = dtype

    def add(self, name: str, value: np.ndarray) -> Parameter:
        if name in self._store:
            raise ValueError(f"duplicate parameter name {name!r}")
        p = Parameter(name, Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True))
        self._store[name] = p
        return p

    def glorot(self, name: str, shape: tuple[int, int]) -> Parameter:
        fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        w = self.rng.split(name).uniform(shape, dtype=np.float64) * 2 * limit - limit
        return self.add(name, w)

    def zeros(self, name: str, shape) -> Parameter:
        return self.add(name, np.zeros(shape))

    def const(self, name: str, shape, value: float) -> Parameter:
        return self.add(name, np.full(shape, value))

    def __getitem__(self, name: str) -> Tensor:
        return self._store[name].tensor

    def __contains__(self, name: str) -> bool:
        return name in self._store

    def __len__(self) -> int:
        return len(self._store)

    def names(self):
        return list(self._store)

    def items(self):
        return [(n, p.tensor) for n, p in self._store.items()]

    def parameters(self):
        return list(self._store.values())

    def subset(self, prefix: str) -> dict[str, Tensor]:
        pre = prefix.rstrip("/") + "/"
        return {n: p.tensor for n, p in self._store.items() if n.startswith(pre)}

    def state_dict(self) -> dict[str, np.ndarray]:
        return {n: p.tensor.data for n, p in self._store.items()}

    def load_state_dict(self, state: dict[str, np.ndarray], prefix: str = ""):
        for n, p in self._store.items():
            key = prefix + n
            if key not in state:
                raise KeyError(f"checkpoint missing parameter {key!r}")
            arr = np.asarray(state[key])
            if arr.shape != p.tensor.data.shape:
                raise ValueError(f"shape mismatch for {key!r}: {arr.shape} vs {p.tensor.data.shape}")
            p.tensor.data = arr.astype(p.tensor.data.dtype, copy=True)


ACTIVATIONS = {
    "relu": T.relu,
    "tanh": T.tanh,
    "identity": lambda t: t,
}


def linear_init(params: Params, prefix: str, n_in: int, n_out: int, w_scale: float | None = None):
    if w_scale is None:
        params.glorot(f"{prefix}/w", (n_in, n_out))
    else:
        w = params.rng.split(f"{prefix}/w").normal((n_in, n_out), dtype=np.float64) * w_scale
        params.add(f"{prefix}/w", w)
    params.zeros(f"{prefix}/b", (n_out,))


def linear(params: Params, prefix: str, x: Tensor) -> Tensor:
    return T.matmul(x, params[f"{prefix}/w"]) + params[f"{prefix}/b"]


def mlp_init(params: Params, prefix: str, n_in: int, widths, out_scale: float | None = None):
    """Stack of affine layers named l1..lN under `prefix`."""
    widths = list(widths)
    if any(w <= 0 for w in widths):
        raise ValueError(f"layer widths must be positive, got {widths}")
    for i, w in enumerate(widths, start=1):
        scale = out_scale if i == len(widths) else None
        linear_init(params, f"{prefix}/l{i}", n_in, w, w_scale=scale)
        n_in = w


def mlp_forward(params: Params, prefix: str, x: Tensor, layer_widths, activation="relu") -> Tensor:
    """Forward through the MLP registered by `mlp_init`.

    The activation is applied after every layer except the last.
    """
    act = ACTIVATIONS[activation] if isinstance(activation, str) else activation
    widths = list(layer_widths)
    if x.shape[-1] != params[f"{prefix}/l1/w"].shape[0]:
        raise ValueError(
            f"mlp {prefix!r}: input width {x.shape[-1]} != {params[f'{prefix}/l1/w'].shape[0]}"
        )
    h = x
    for i, _ in enumerate(widths, start=1):
        h = linear(params, f"{prefix}/l{i}", h)
        if i != len(widths):
            h = act(h)
    return h


class MLP:
    """Convenience wrapper tying an init'd stack to its widths/activation."""

    def __init__(self, params: Params, prefix: str, n_in: int, widths, activation="relu",
                 out_scale: float | None = None):
        self.params = params
        self.prefix = prefix
        self.widths = list(widths)
        self.activation = activation
        mlp_init(params, prefix, n_in, self.widths, out_scale=out_scale)

    def __call__(self, x: Tensor) -> Tensor:
        return mlp_forward(self.params, self.prefix, x, self.widths, self.activation)


# -- recurrent cells -----------------------------------------------------

def gru_init(params: Params, prefix: str, n_in: int, n_hidden: int):
    params.glorot(f"{prefix}/w", (n_in, 3 * n_hidden))
    params.glorot(f"{prefix}/u_zr", (n_hidden, 2 * n_hidden))
    params.glorot(f"{prefix}/u_n", (n_hidden, n_hidden))
    params.zeros(f"{prefix}/b", (3 * n_hidden,))


def gru_cell(params: Params, prefix: str, x: Tensor, h: Tensor) -> Tensor:
    """Single GRU step: update/reset gates plus a tanh candidate."""
    n_h = params[f"{prefix}/u_n"].shape[0]
    if h.shape[-1] != n_h:
        raise ValueError(f"gru {prefix!r}: hidden width {h.shape[-1]} != {n_h}")
    xw = T.matmul(x, params[f"{prefix}/w"]) + params[f"{prefix}/b"]
    hu = T.matmul(h, params[f"{prefix}/u_zr"])
    z = T.sigmoid(T.narrow(xw, -1, 0, n_h) + T.narrow(hu, -1, 0, n_h))
    r = T.sigmoid(T.narrow(xw, -1, n_h, n_h) + T.narrow(hu, -1, n_h, n_h))
    n = T.tanh(T.narrow(xw, -1, 2 * n_h, n_h) + T.matmul(r * h, params[f"{prefix}/u_n"]))
    return (1.0 - z) * n + z * h


def lstm_init(params: Params, prefix: str, n_in: int, n_hidden: int, forget_bias: float = 1.0):
    params.glorot(f"{prefix}/w", (n_in, 4 * n_hidden))
    params.glorot(f"{prefix}/u", (n_hidden, 4 * n_hidden))
    b = np.zeros(4 * n_hidden)
    b[n_hidden:2 * n_hidden] = forget_bias
    params.add(f"{prefix}/b", b)


def lstm_cell(params: Params, prefix: str, x: Tensor, h: Tensor, c: Tensor):
    """Single LSTM step; returns (h', c'). Gate order: input, forget, cell, output."""
    n_h = h.shape[-1]
    gates = T.matmul(x, params[f"{prefix}/w"]) + T.matmul(h, params[f"{prefix}/u"]) + params[f"{prefix}/b"]
    i = T.sigmoid(T.narrow(gates, -1, 0, n_h))
    f = T.sigmoid(T.narrow(gates, -1, n_h, n_h))
    g = T.tanh(T.narrow(gates, -1, 2 * n_h, n_h))
    o = T.sigmoid(T.narrow(gates, -1, 3 * n_h, n_h))
    c_new = f * c + i * g
    h_new = o * T.tanh(c_new)
    return h_new, c_new


class GRUCell:
    def __init__(self, params: Params, prefix: str, n_in: int, n_hidden: int):
        self.params, self.prefix, self.n_hidden = params, prefix, n_hidden
        gru_init(params, prefix, n_in, n_hidden)

    def __call__(self, x: Tensor, h: Tensor) -> Tensor:
        return gru_cell(self.params, self.prefix, x, h)


class LSTMCell:
    def __init__(self, params: Params, prefix: str, n_in: int, n_hidden: int):
        self.params, self.prefix, self.n_hidden = params, prefix, n_hidden
        lstm_init(params, prefix, n_in, n_hidden)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor):
        return lstm_cell(self.params, self.prefix, x, h, c)

    def zero_state(self, batch: int, dtype=np.float32):
        return (T.zeros((batch, self.n_hidden), dtype), T.zeros((batch, self.n_hidden), dtype))
