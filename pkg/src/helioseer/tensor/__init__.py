"""Minimal n-dimensional tensor engine with reverse-mode gradients and FFTs."""

from .core import (Tensor, ComplexTensor, ShapeError, add, sub, mul, div, matmul, reshape,
                   transpose, concat, getitem, slice_, pad, roll, sum_, mean, tanh, exp, clip, relu,
                   gelu, softplus, softshrink, softmax, layer_norm, fft2, ifft2, precision,
                   no_grad, default_dtype, set_default_dtype)
from .gradcheck import grad_check, module_grad_check, NonFiniteError

__all__ = [
    "Tensor", "ComplexTensor", "ShapeError", "add", "sub", "mul", "div", "matmul", "reshape",
    "transpose", "concat", "getitem", "slice_", "pad", "roll", "sum_", "mean", "tanh", "exp", "clip",
    "relu", "gelu", "softplus", "softshrink", "softmax", "layer_norm", "fft2", "ifft2",
    "precision", "no_grad", "default_dtype", "set_default_dtype", "grad_check",
    "module_grad_check", "NonFiniteError",
]
