"""Minimal reverse-mode differentiation engine for the forecasting models."""
from .functional import (conv1d, conv2d, dense, dropout, lstm, maxpool1d, maxpool2d, softmax,
                         softmax_cross_entropy, upsample1d)
from .gradcheck import GradCheckReport, check_gradients, finite_diff_check
from .optim import Adam, AdamConfig
from .tensor import Parameter, Tensor, backward, concat, matmul, mean, relu, reshape, sigmoid, tanh, transpose

__all__ = [
    "Adam", "AdamConfig", "GradCheckReport", "Parameter", "Tensor", "backward", "check_gradients", "concat",
    "conv1d", "conv2d", "dense", "dropout", "finite_diff_check", "lstm", "matmul", "maxpool1d", "maxpool2d",
    "mean", "relu", "reshape", "sigmoid", "softmax", "softmax_cross_entropy", "tanh", "transpose", "upsample1d",
]
