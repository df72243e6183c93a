"""Distribution nodes: diagonal Gaussians and categoricals over symbols.

Gaussians carry a strictly positive std enforced at construction
(softplus + floor); categoricals sample through a straight-through one-hot
whose backward pass is the softmax gradient.  Sampling noise always comes in
from the caller, never from inside the op.
"""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .tensor import Tensor

STD_FLOOR = 0.01

_LOG_2PI = math.log(2.0 * math.pi)


class DiagGaussian:
    """Independent Gaussian per dimension; KL/entropy sum over the last axis."""

    def __init__(self, mean: Tensor, std: Tensor):
        if mean.shape != std.shape:
            raise ValueError(f"mean/std shape mismatch: {mean.shape} vs {std.shape}")
        if not T.is_grad_enabled() or not (mean.on_tape or std.on_tape):
            if np.any(std.data <= 0):
                raise ValueError("std must be strictly positive")
        self.mean = mean
        self.std = std

    @property
    def shape(self):
        return self.mean.shape

    def rsample(self, noise: np.ndarray | Tensor) -> Tensor:
        """Reparameterized sample mean + std*noise; noise is standard normal."""
        noise = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
        if noise.shape != self.mean.shape:
            raise ValueError(f"noise shape {noise.shape} != mean shape {self.mean.shape}")
        return self.mean + self.std * Tensor(noise.astype(self.mean.dtype, copy=False))

    def mode(self) -> Tensor:
        return self.mean

    def log_prob(self, x: Tensor) -> Tensor:
        z = (x - self.mean) / self.std
        per_dim = -0.5 * T.square(z) - T.log(self.std) - 0.5 * _LOG_2PI
        return per_dim.sum(axis=-1)

    def entropy(self) -> Tensor:
        per_dim = T.log(self.std) + 0.5 * (_LOG_2PI + 1.0)
        return per_dim.sum(axis=-1)

    def detach(self) -> "DiagGaussian":
        return DiagGaussian(self.mean.detach(), self.std.detach())


def gaussian_from_raw(raw_mean: Tensor, raw_std: Tensor, std_floor: float = STD_FLOOR) -> DiagGaussian:
    """Build a valid DiagGaussian from unconstrained head outputs."""
    return DiagGaussian(raw_mean, T.softplus(raw_std) + std_floor)


def gaussian_rsample(dist: DiagGaussian, noise) -> Tensor:
    return dist.rsample(noise)


def kl_diag_gaussian(p: DiagGaussian, q: DiagGaussian) -> Tensor:
    """Closed-form KL(p || q), summed over the last (latent) axis."""
    if p.shape != q.shape:
        raise ValueError(f"KL shape mismatch: {p.shape} vs {q.shape}")
    var_ratio = T.square(p.std / q.std)
    mean_term = T.square((p.mean - q.mean) / q.std)
    per_dim = 0.5 * (var_ratio + mean_term - 1.0) - T.log(p.std / q.std)
    return per_dim.sum(axis=-1)


class Categorical:
    """Distribution over K >= 2 symbols given by logits on the last axis."""

    def __init__(self, logits: Tensor):
        if logits.shape[-1] < 2:
            raise ValueError(f"need K >= 2 symbols, got {logits.shape[-1]}")
        if not np.isfinite(logits.data).all():
            raise ValueError("NaN/Inf logits")
        self.logits = logits

    @property
    def n(self) -> int:
        return self.logits.shape[-1]

    def probs(self) -> Tensor:
        return T.softmax(self.logits, axis=-1)

    def log_probs(self) -> Tensor:
        return self.logits - T.logsumexp(self.logits, axis=-1, keepdims=True)

    def entropy(self) -> Tensor:
        lp = self.log_probs()
        p = T.softmax(self.logits, axis=-1)
        return -(p * lp).sum(axis=-1)

    def sample_index(self, noise: np.ndarray | None) -> np.ndarray:
        """Gumbel-max sample from uniform noise; argmax when noise is None."""
        logits = self.logits.data
        if noise is None:
            return logits.argmax(axis=-1)
        noise = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
        if noise.shape != logits.shape:
            raise ValueError(f"noise shape {noise.shape} != logits shape {logits.shape}")
        gumbel = -np.log(-np.log(noise + 1e-20) + 1e-20)
        return (logits + gumbel).argmax(axis=-1)


def onehot(indices: np.ndarray, n: int, dtype=np.float32) -> np.ndarray:
    out = np.zeros(indices.shape + (n,), dtype=dtype)
    np.put_along_axis(out, np.expand_dims(indices, -1), 1.0, axis=-1)
    return out


def straight_through_onehot(dist: Categorical, noise=None) -> Tensor:
    """Exact one-hot forward; backward substitutes the softmax gradient.

    With `noise` (uniform in [0,1), same shape as logits) the symbol is a
    Gumbel-max sample; without it, the argmax.
    """
    idx = dist.sample_index(noise)
    hot = onehot(idx, dist.n)
    return T.straight_through(dist.logits, hot)


def gumbel_softmax_sample(logits: Tensor, temperature: float, noise) -> Tensor:
    """Relaxed one-hot softmax((logits + gumbel)/tau); differentiable in logits."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    noise = noise.data if isinstance(noise, Tensor) else np.asarray(noise)
    gumbel = -np.log(-np.log(noise + 1e-20) + 1e-20)
    return T.softmax((logits + Tensor(gumbel.astype(logits.dtype, copy=False))) * (1.0 / temperature), axis=-1)


class TanhGaussian:
    """Gaussian squashed through tanh; used for bounded physical actions."""

    def __init__(self, base: DiagGaussian):
        self.base = base

    def rsample(self, noise) -> Tensor:
        return T.tanh(self.base.rsample(noise))

    def mode(self) -> Tensor:
        return T.tanh(self.base.mean)

    def entropy(self) -> Tensor:
        # Base-distribution entropy; a standard proxy for the squashed one.
        return self.base.entropy()
