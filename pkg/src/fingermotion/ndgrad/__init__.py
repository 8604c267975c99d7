"""Small reverse-mode differentiation core on numpy arrays."""
from .gradcheck import gradient_check, relative_error
from .optim import AdamState, adam_step
from .recurrent import lstm_cell, lstm_sequence
from .tensor import (
    Tensor, add, affine, as_tensor, concat, dropout, getitem, matmul, mean, mse, mul, neg,
    parameter, power, repeat, reshape, sigmoid, split, stack, tanh, transpose, tsum,
)

__all__ = [
    "Tensor", "AdamState", "adam_step", "gradient_check", "relative_error", "lstm_cell",
    "lstm_sequence", "add", "affine", "as_tensor", "concat", "dropout", "getitem", "matmul",
    "mean", "mse", "mul", "neg", "parameter", "power", "repeat", "reshape", "sigmoid", "split",
    "stack", "tanh", "transpose", "tsum",
]
