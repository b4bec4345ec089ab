"""Minimal differentiable-compute kernel.

Dense/conv/LSTM layers, bilinear warping, channel softmax, and Adam, with
hand-derived backward passes. Gradients are verified against central finite
differences (see :mod:`gvf.numerics.gradcheck`); training runs in float64.
"""

from gvf.numerics.layers import (
    LayerParams,
    ShapeError,
    affine,
    affine_backward,
    affine_forward,
    affine_params,
    bilinear_warp,
    bilinear_warp_backward,
    bilinear_warp_forward,
    channel_softmax,
    channel_softmax_backward,
    channel_softmax_forward,
    conv2d,
    conv2d_backward,
    conv2d_forward,
    conv_params,
    lstm_params,
    lstm_step,
    lstm_step_backward,
    lstm_step_forward,
    relu_backward,
    relu_forward,
    sigmoid,
    upsample2x_backward,
    upsample2x_forward,
)
from gvf.numerics.adam import OptimizerState, adam_update
from gvf.numerics.gradcheck import GradCheckReport, grad_check

__all__ = [
    "LayerParams",
    "ShapeError",
    "OptimizerState",
    "GradCheckReport",
    "adam_update",
    "affine",
    "affine_backward",
    "affine_forward",
    "affine_params",
    "bilinear_warp",
    "bilinear_warp_backward",
    "bilinear_warp_forward",
    "channel_softmax",
    "channel_softmax_backward",
    "channel_softmax_forward",
    "conv2d",
    "conv2d_backward",
    "conv2d_forward",
    "conv_params",
    "grad_check",
    "lstm_params",
    "lstm_step",
    "lstm_step_backward",
    "lstm_step_forward",
    "relu_backward",
    "relu_forward",
    "sigmoid",
    "upsample2x_backward",
    "upsample2x_forward",
]
