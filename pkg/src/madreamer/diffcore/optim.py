"""Adam optimizer over a set of named parameters."""

from __future__ import annotations

import numpy as np

from .nn import Parameter


class AdamState:
    """Per-parameter moment accumulators plus the shared step counter."""

    def __init__(self, params: list[Parameter], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, clip_norm: float | None = 100.0):
        self.params = {p.name: p for p in params}
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.step_count = 0
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}


def global_norm(grads: dict[str, np.ndarray], names) -> float:
    total = 0.0
    for n in names:
        g = grads[n]
        total += float(np.sum(np.square(g.astype(np.float64))))
    return float(np.sqrt(total))


def adam_step(state: AdamState, grads: dict[str, np.ndarray]) -> None:
    """Apply one update in place; `grads` must cover every registered parameter."""
    missing = [n for n in state.params if n not in grads]
    if missing:
        raise KeyError(f"missing gradients for parameters: {missing[:3]}{'...' if len(missing) > 3 else ''}")
    scale = 1.0
    if state.clip_norm is not None:
        norm = global_norm(grads, state.params)
        if norm > state.clip_norm:
            scale = state.clip_norm / (norm + 1e-12)
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in state.params.items():
        g = grads[name] * scale
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = (state.lr / bias1) * m / (np.sqrt(v / bias2) + state.eps)
        p.tensor.data = p.tensor.data - update.astype(p.tensor.data.dtype, copy=False)


class Adam:
    """Bound optimizer: remembers its parameter subset."""

    def __init__(self, params: list[Parameter], lr: float, **kw):
        self.state = AdamState(params, lr, **kw)

    def apply(self, grads: dict[str, np.ndarray]) -> None:
        adam_step(self.state, {n: grads[n] for n in self.state.params})

    @property
    def step_count(self) -> int:
        return self.state.step_count
