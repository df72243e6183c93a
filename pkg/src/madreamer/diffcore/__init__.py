"""Reverse-mode autodiff core: tensors, layers, distributions, Adam, checkpoints."""

from . import tensor
from .checkpoint import load_params, save_params
from .dists import (
    Categorical,
    DiagGaussian,
    TanhGaussian,
    gaussian_from_raw,
    gaussian_rsample,
    gumbel_softmax_sample,
    kl_diag_gaussian,
    onehot,
    straight_through_onehot,
)
from .nn import (
    MLP,
    GRUCell,
    LSTMCell,
    Parameter,
    Params,
    gru_cell,
    gru_init,
    linear,
    linear_init,
    lstm_cell,
    lstm_init,
    mlp_forward,
    mlp_init,
)
from .optim import Adam, AdamState, adam_step
from .rng import Rng
from .tensor import GradError, Tensor, backward, grad, no_grad, stop_grad

__all__ = [
    "tensor",
    "Tensor",
    "GradError",
    "no_grad",
    "backward",
    "grad",
    "stop_grad",
    "Rng",
    "Params",
    "Parameter",
    "MLP",
    "GRUCell",
    "LSTMCell",
    "mlp_init",
    "mlp_forward",
    "linear",
    "linear_init",
    "gru_init",
    "gru_cell",
    "lstm_init",
    "lstm_cell",
    "DiagGaussian",
    "Categorical",
    "TanhGaussian",
    "gaussian_from_raw",
    "gaussian_rsample",
    "kl_diag_gaussian",
    "straight_through_onehot",
    "gumbel_softmax_sample",
    "onehot",
    "Adam",
    "AdamState",
    "adam_step",
    "save_params",
    "load_params",
]
