"""Network building blocks: closed forms, oracle comparisons, shape errors."""

import numpy as np
import pytest

from madreamer.diffcore import (
    MLP,
    GRUCell,
    LSTMCell,
    Params,
    Rng,
    gru_cell,
    gru_init,
    mlp_forward,
    mlp_init,
)
from madreamer.diffcore.tensor import Tensor

from oracles import mlp_oracle


def zeroed(params: Params) -> Params:
    for name in params.names():
        params[name].data[:] = 0.0
    return params


class TestMlp:
    def test_zero_weights_give_zero_output(self):
        params = zeroed(Params(Rng(0)))
        # re-register after zeroing helper cleared nothing; build then zero
        params = Params(Rng(0))
        mlp_init(params, "m", 4, (8, 3))
        for name in params.names():
            params[name].data[:] = 0.0
        out = mlp_forward(params, "m", Tensor(np.ones((2, 4), np.float32)), (8, 3))
        assert np.array_equal(out.data, np.zeros((2, 3)))

    def test_identity_single_layer(self):
        params = Params(Rng(1))
        mlp_init(params, "m", 3, (3,))
        params["m/l1/w"].data[:] = np.eye(3)
        params["m/l1/b"].data[:] = 0.0
        x = np.random.default_rng(0).normal(size=(5, 3)).astype(np.float32)
        out = mlp_forward(params, "m", Tensor(x), (3,), "identity")
        assert np.allclose(out.data, x)

    def test_two_layer_matches_straight_line_oracle(self):
        params = Params(Rng(2))
        widths = (6, 4)
        mlp_init(params, "m", 5, widths)
        x = np.random.default_rng(3).normal(size=(7, 5)).astype(np.float32)
        got = mlp_forward(params, "m", Tensor(x), widths).data
        want = mlp_oracle([params["m/l1/w"].data, params["m/l2/w"].data],
                          [params["m/l1/b"].data, params["m/l2/b"].data],
                          x, activation=lambda h: np.maximum(h, 0.0))
        assert np.allclose(got, want, atol=1e-6)

    def test_width_mismatch_raises(self):
        params = Params(Rng(4))
        mlp_init(params, "m", 4, (3,))
        with pytest.raises(ValueError):
            mlp_forward(params, "m", Tensor(np.ones((2, 5), np.float32)), (3,))

    def test_nonpositive_width_rejected(self):
        params = Params(Rng(5))
        with pytest.raises(ValueError):
            mlp_init(params, "m", 4, (8, 0))

    def test_deterministic_given_params_and_input(self):
        params = Params(Rng(6))
        mlp_init(params, "m", 3, (4, 2))
        x = Tensor(np.ones((2, 3), np.float32))
        a = mlp_forward(params, "m", x, (4, 2)).data
        b = mlp_forward(params, "m", x, (4, 2)).data
        assert np.array_equal(a, b)


class TestGru:
    def test_zero_weights_closed_form(self):
        params = Params(Rng(0))
        gru_init(params, "g", 3, 5)
        for name in params.names():
            params[name].data[:] = 0.0
        h = np.arange(5, dtype=np.float32).reshape(1, 5)
        out = gru_cell(params, "g", Tensor(np.ones((1, 3), np.float32)), Tensor(h))
        # update gate sigmoid(0)=0.5, candidate tanh(0)=0 -> h' = 0.5 h
        assert np.allclose(out.data, 0.5 * h, atol=1e-7)

    def test_zero_everything_gives_zero(self):
        params = Params(Rng(1))
        gru_init(params, "g", 3, 5)
        for name in params.names():
            params[name].data[:] = 0.0
        out = gru_cell(params, "g", Tensor(np.zeros((1, 3), np.float32)),
                       Tensor(np.zeros((1, 5), np.float32)))
        assert np.array_equal(out.data, np.zeros((1, 5)))

    def test_hidden_width_mismatch_raises(self):
        params = Params(Rng(2))
        gru_init(params, "g", 3, 5)
        with pytest.raises(ValueError):
            gru_cell(params, "g", Tensor(np.zeros((1, 3), np.float32)),
                     Tensor(np.zeros((1, 4), np.float32)))

    def test_output_width_preserved(self):
        params = Params(Rng(3))
        cell = GRUCell(params, "g", 7, 11)
        out = cell(Tensor(np.ones((4, 7), np.float32)), Tensor(np.zeros((4, 11), np.float32)))
        assert out.shape == (4, 11)


class TestLstm:
    def test_forget_bias_initialized_to_one(self):
        params = Params(Rng(0))
        LSTMCell(params, "l", 3, 4)
        b = params["l/b"].data
        assert np.all(b[4:8] == 1.0)
        assert np.all(b[:4] == 0.0)

    def test_state_shapes(self):
        params = Params(Rng(1))
        cell = LSTMCell(params, "l", 3, 6)
        h, c = cell.zero_state(5)
        h2, c2 = cell(Tensor(np.ones((5, 3), np.float32)), h, c)
        assert h2.shape == (5, 6) and c2.shape == (5, 6)


class TestParams:
    def test_duplicate_names_rejected(self):
        params = Params(Rng(0))
        params.zeros("a/w", (2,))
        with pytest.raises(ValueError):
            params.zeros("a/w", (2,))

    def test_init_is_name_keyed_not_order_keyed(self):
        p1 = Params(Rng(5))
        p1.glorot("first", (3, 3))
        p1.glorot("second", (3, 3))
        p2 = Params(Rng(5))
        p2.glorot("second", (3, 3))
        p2.glorot("first", (3, 3))
        assert np.array_equal(p1["first"].data, p2["first"].data)
        assert np.array_equal(p1["second"].data, p2["second"].data)

    def test_subset_by_prefix(self):
        params = Params(Rng(1))
        params.zeros("agent0/actor/w", (2,))
        params.zeros("agent0/critic/w", (2,))
        assert list(params.subset("agent0/actor")) == ["agent0/actor/w"]
