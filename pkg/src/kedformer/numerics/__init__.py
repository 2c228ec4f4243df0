"""Tensor arithmetic, real FFT and reverse-mode differentiation."""

from . import kernels
from .fft import inverse_real_fft, real_fft
from .gradcheck import check_gradient
from .tensor import (
    Tensor,
    add,
    as_tensor,
    avg_pool_1d,
    check_finite,
    circular_correlation,
    circular_roll,
    concat,
    delay_aggregate,
    exp,
    getitem,
    linear,
    matmul,
    mean,
    mse_loss,
    mul,
    pad_or_truncate,
    relu,
    reshape,
    softmax,
    softmax_array,
    sub,
    take_along_axis,
    transpose,
    tsum,
)

__all__ = [
    "Tensor",
    "add",
    "as_tensor",
    "avg_pool_1d",
    "check_finite",
    "check_gradient",
    "circular_correlation",
    "circular_roll",
    "concat",
    "delay_aggregate",
    "exp",
    "getitem",
    "inverse_real_fft",
    "kernels",
    "linear",
    "matmul",
    "mean",
    "mse_loss",
    "mul",
    "pad_or_truncate",
    "real_fft",
    "relu",
    "reshape",
    "softmax",
    "softmax_array",
    "sub",
    "take_along_axis",
    "transpose",
    "tsum",
]
