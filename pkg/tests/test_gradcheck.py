"""Finite-difference verification of every differentiable op (20 seeds)."""

import numpy as np
import pytest

from madreamer.diffcore import (
    DiagGaussian,
    Params,
    Rng,
    gaussian_from_raw,
    gru_cell,
    gru_init,
    kl_diag_gaussian,
    lstm_cell,
    lstm_init,
    mlp_forward,
    mlp_init,
)
from madreamer.diffcore import tensor as T
from madreamer.diffcore.tensor import Tensor

from oracles import finite_difference_check

SEEDS = list(range(20))


def _param(rng, shape, shift=0.0):
    return Tensor((rng.standard_normal(shape) + shift).astype(np.float32), requires_grad=True)


def _nudge_from(x: np.ndarray, point: float, margin: float) -> np.ndarray:
    """Move entries away from a kink so finite differences stay one-sided."""
    close = np.abs(x - point) < margin
    x = x.copy()
    x[close] = point + margin * np.sign(x[close] - point + 1e-12)
    return x


@pytest.mark.parametrize("seed", SEEDS)
def test_elementwise_ops_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, (4, 5))
    y = _param(rng, (4, 5))
    y.data = (0.5 * np.abs(y.data) + 1.5)     # well away from zero for log/sqrt/div
    x.data = _nudge_from(x.data, 0.0, 0.05)   # relu kink

    cases = {
        "mul": lambda: (x * y).sum(),
        "div": lambda: (x / y).sum(),
        "sub": lambda: (x - y).mean(),
        "relu": lambda: T.relu(x).sum(),
        "tanh": lambda: T.tanh(x).sum(),
        "sigmoid": lambda: T.sigmoid(x).sum(),
        "exp": lambda: T.exp(x * 0.3).sum(),
        "log": lambda: T.log(y).sum(),
        "softplus": lambda: T.softplus(x).sum(),
        "sqrt": lambda: T.sqrt(y).sum(),
        "square": lambda: T.square(x).mean(),
        "softmax": lambda: (T.softmax(x) * Tensor(np.arange(5, dtype=np.float32))).sum(),
        "logsumexp": lambda: T.logsumexp(x).sum(),
        "mean_axis": lambda: x.mean(axis=0).sum(),
    }
    for name, fn in cases.items():
        finite_difference_check(fn, {"x": x, "y": y}, rng=rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_matmul_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    a = _param(rng, (3, 4))
    b = _param(rng, (4, 2))
    finite_difference_check(lambda: T.matmul(a, b).sum(), {"a": a, "b": b}, rng=rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_kink_ops_match_finite_differences(seed):
    rng = np.random.default_rng(200 + seed)
    x = _param(rng, (6,))
    x.data = _nudge_from(_nudge_from(x.data, 0.5, 0.05), -0.5, 0.05)
    y = _param(rng, (6,))
    y.data = _nudge_from(y.data - x.data, 0.0, 0.05) + x.data  # keep |x-y| off the tie
    cases = {
        "maximum_scalar": lambda: T.maximum_scalar(x, 0.5).sum(),
        "clip_scalar": lambda: T.clip_scalar(x, -0.5, 0.5).sum(),
        "minimum": lambda: T.minimum(x, y).sum(),
    }
    for fn in cases.values():
        finite_difference_check(fn, {"x": x, "y": y}, rng=rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_structural_ops_match_finite_differences(seed):
    rng = np.random.default_rng(300 + seed)
    x = _param(rng, (3, 6))
    cases = {
        "narrow": lambda: T.narrow(x, 1, 2, 3).sum(),
        "concat": lambda: T.concat([x, x * 2.0], axis=1).mean(),
        "stack": lambda: T.stack([x, x * 0.5], axis=0).sum(),
        "reshape": lambda: T.reshape(x, (6, 3)).mean(axis=1).sum(),
    }
    for fn in cases.values():
        finite_difference_check(fn, {"x": x}, rng=rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_gru_cell_matches_finite_differences(seed):
    params = Params(Rng(seed))
    gru_init(params, "g", 3, 4)
    x = _param(np.random.default_rng(seed), (2, 3))
    h = _param(np.random.default_rng(seed + 1), (2, 4))
    everything = {**dict(params.items()), "x": x, "h": h}
    finite_difference_check(lambda: gru_cell(params, "g", x, h).sum(), everything,
                            rng=np.random.default_rng(seed))


@pytest.mark.parametrize("seed", SEEDS)
def test_lstm_cell_matches_finite_differences(seed):
    params = Params(Rng(seed + 50))
    lstm_init(params, "l", 3, 4)
    rng = np.random.default_rng(seed)
    x = _param(rng, (2, 3))
    h = _param(rng, (2, 4))
    c = _param(rng, (2, 4))

    def loss():
        hn, cn = lstm_cell(params, "l", x, h, c)
        return (hn + cn).sum()

    finite_difference_check(loss, {**dict(params.items()), "x": x, "h": h, "c": c},
                            rng=rng)


@pytest.mark.parametrize("seed", SEEDS)
def test_mlp_matches_finite_differences(seed):
    # tanh keeps the map smooth; the relu variant is value-checked against the
    # straight-line oracle instead (finite differences break at kinks)
    params = Params(Rng(seed + 99))
    mlp_init(params, "m", 4, (6, 3))
    x = _param(np.random.default_rng(seed), (5, 4))
    finite_difference_check(lambda: mlp_forward(params, "m", x, (6, 3), "tanh").sum(),
                            {**dict(params.items()), "x": x},
                            rng=np.random.default_rng(seed))


@pytest.mark.parametrize("seed", SEEDS)
def test_gaussian_ops_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    mean = _param(rng, (4,))
    raw_std = _param(rng, (4,))
    mean_q = _param(rng, (4,))
    raw_std_q = _param(rng, (4,))
    noise = rng.standard_normal(4).astype(np.float32)
    x_obs = rng.standard_normal(4).astype(np.float32)
    cases = {
        "rsample": lambda: gaussian_from_raw(mean, raw_std).rsample(noise).sum(),
        "log_prob": lambda: gaussian_from_raw(mean, raw_std).log_prob(Tensor(x_obs)),
        "entropy": lambda: gaussian_from_raw(mean, raw_std).entropy(),
        "kl": lambda: kl_diag_gaussian(gaussian_from_raw(mean, raw_std),
                                       gaussian_from_raw(mean_q, raw_std_q)),
    }
    ps = {"mean": mean, "raw_std": raw_std, "mean_q": mean_q, "raw_std_q": raw_std_q}
    for fn in cases.values():
        finite_difference_check(fn, ps, rng=rng)


def test_rsample_mean_gradient_is_identity():
    mean = Tensor(np.zeros(5, np.float32), requires_grad=True)
    std = Tensor(np.ones(5, np.float32))
    for i in range(5):
        dist = DiagGaussian(mean, std)
        sample = dist.rsample(np.zeros(5, np.float32))
        grads = T.backward(T.narrow(sample, 0, i, 1).sum(), {"mean": mean})
        expected = np.zeros(5)
        expected[i] = 1.0
        assert np.array_equal(grads["mean"], expected)
