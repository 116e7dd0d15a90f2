"""Small float64 reverse-mode autodiff engine with compiled hot kernels."""

from . import kernels, nn, optim, seq_ops
from .gradcheck import check_gradients, numeric_gradient
from .tensor import (
    Tensor,
    clip,
    concat,
    exp,
    grad_enabled,
    leaky_relu,
    log,
    log_softmax,
    matmul,
    no_grad,
    relu,
    sigmoid,
    softmax,
    stack,
    tanh,
    tmean,
    tsum,
)

__all__ = [
    "Tensor", "no_grad", "grad_enabled", "check_gradients", "numeric_gradient",
    "kernels", "nn", "optim", "seq_ops",
    "clip", "concat", "exp", "leaky_relu", "log", "log_softmax", "matmul",
    "relu", "sigmoid", "softmax", "stack", "tanh", "tmean", "tsum",
]
