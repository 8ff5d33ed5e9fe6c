"""Reverse-mode autodiff engine on dense numpy tensors."""

from .engine import (
    GELU_C,
    Tensor,
    absolute,
    add,
    backward,
    concat,
    corrupt_gradient,
    expand,
    exp,
    gather_rows,
    gelu,
    get_default_dtype,
    grad_enabled,
    log,
    matmul,
    maximum,
    mul,
    no_grad,
    precision,
    reduce_max,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    scalar_mul,
    scatter_rows,
    set_default_dtype,
    set_nan_checks,
    sigmoid,
    softmax,
    softplus,
    sqrt,
    stack,
    sub,
    tanh,
    tensor,
    transpose,
)
from .nnops import bilinear_sample, conv2d, pad2d, ring_shift, upsample_nearest
from .gradcheck import finite_diff_check, finite_diff_check_sampled
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "GELU_C", "Tensor", "tensor", "backward", "no_grad", "grad_enabled",
    "precision", "set_default_dtype", "get_default_dtype", "set_nan_checks",
    "add", "sub", "mul", "scalar_mul", "matmul", "transpose", "concat",
    "reshape", "reduce_sum", "reduce_mean", "reduce_max", "softmax", "gelu",
    "sigmoid", "tanh", "relu", "softplus", "exp", "log", "sqrt", "absolute",
    "maximum", "expand", "gather_rows", "scatter_rows", "stack", "corrupt_gradient",
    "conv2d", "bilinear_sample", "pad2d", "ring_shift", "upsample_nearest",
    "finite_diff_check", "finite_diff_check_sampled",
    "save_checkpoint", "load_checkpoint",
]
