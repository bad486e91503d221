"""Closed-form moment propagation operators and the single-pass forward.

Each operator propagates per-element means together with a spread
(variance or second raw moment) through one layer in a single fused
kernel call, under the mean-field independence assumption.  For a dense
layer with Gaussian weights the output neuron moments are

    mean_i = sum_j w_mean[i,j] * x_mean[j] (+ bias mean)
    var_i  = sum_j E[w^2][i,j] * E[x^2][j] - (w_mean[i,j] * x_mean[j])^2
             (+ bias variance)

with the first-layer special case (deterministic input x)

    var_i  = sum_j w_var[i,j] * x[j]^2 (+ bias variance).

Convolutions apply the same per-element rule over each receptive field.
The rectifier and max pool replace their non-Gaussian outputs with
moment-matched Gaussians (see the backend kernels for the closed forms).
"""

from __future__ import annotations

import numpy as np

from . import backends
from .errors import ShapeError, WrongSpreadKind
from .layers import (Conv2d, Dense, Flatten, GaussianWeights, MaxPool2x2,
                     ModelGraph, ReLU)
from .tensors import (DeterministicTensor, GaussianTensor, LogitDistribution,
                      SpreadKind, convert_spread)


def _require_kind(t: GaussianTensor, kind: SpreadKind, op: str) -> None:
    if t.kind is not kind:
        raise WrongSpreadKind(f"{op} expects {kind.value} input, got {t.kind.value}")


def _bias_arrays(w: GaussianWeights) -> tuple[np.ndarray, np.ndarray]:
    width = w.out_width
    return w.bias.mean_or_zeros(width), w.bias.var_or_zeros(width)


def dense_pfp(x: GaussianTensor, w: GaussianWeights) -> GaussianTensor:
    """Fused mean+variance dense layer on a second-raw-moment input."""
    _require_kind(x, SpreadKind.SECOND_RAW_MOMENT, "dense")
    if len(x.shape) != 2:
        raise ShapeError(f"dense expects (batch, features) input, got {x.shape}")
    if x.shape[1] != w.mean.shape[1]:
        raise ShapeError(
            f"dense expects input width {w.mean.shape[1]}, got {x.shape[1]}")
    b_mean, b_var = _bias_arrays(w)
    mean, var = backends.get().dense_joint(
        x.mean, x.spread, w.mean, w.second_raw_moments(), b_mean, b_var)
    return GaussianTensor(mean.shape, mean, var, SpreadKind.VARIANCE)


def dense_pfp_det_input(x: DeterministicTensor, w: GaussianWeights) -> GaussianTensor:
    """Dense layer for the first-layer case with a raw input."""
    if len(x.shape) != 2:
        raise ShapeError(f"dense expects (batch, features) input, got {x.shape}")
    if x.shape[1] != w.mean.shape[1]:
        raise ShapeError(
            f"dense expects input width {w.mean.shape[1]}, got {x.shape[1]}")
    b_mean, b_var = _bias_arrays(w)
    mean, var = backends.get().dense_det_joint(
        x.values, w.mean, w.variances(), b_mean, b_var)
    return GaussianTensor(mean.shape, mean, var, SpreadKind.VARIANCE)


def _check_conv_input(shape: tuple[int, ...], w: GaussianWeights, stride: int) -> None:
    if len(shape) != 4:
        raise ShapeError(f"conv expects (batch, channels, H, W) input, got {shape}")
    if shape[1] != w.mean.shape[1]:
        raise ShapeError(
            f"conv expects {w.mean.shape[1]} input channels, got {shape[1]}")
    kh, kw = w.mean.shape[2], w.mean.shape[3]
    if (shape[2] - kh + stride) % stride or (shape[3] - kw + stride) % stride \
            or shape[2] < kh or shape[3] < kw:
        raise ShapeError(
            f"conv output dims for input {shape[2]}x{shape[3]}, kernel {kh}x{kw}, "
            f"stride {stride} are not positive integers")


def conv2d_pfp(x: GaussianTensor, w: GaussianWeights, stride: int = 1) -> GaussianTensor:
    """Fused mean+variance convolution on a second-raw-moment input."""
    _require_kind(x, SpreadKind.SECOND_RAW_MOMENT, "conv")
    _check_conv_input(x.shape, w, stride)
    b_mean, b_var = _bias_arrays(w)
    mean, var = backends.get().conv2d_joint(
        x.mean, x.spread, w.mean, w.second_raw_moments(), b_mean, b_var, stride)
    return GaussianTensor(mean.shape, mean, var, SpreadKind.VARIANCE)


def conv2d_pfp_det_input(x: DeterministicTensor, w: GaussianWeights,
                         stride: int = 1) -> GaussianTensor:
    """Convolution for the first-layer case with a raw input."""
    _check_conv_input(x.shape, w, stride)
    b_mean, b_var = _bias_arrays(w)
    mean, var = backends.get().conv2d_det_joint(
        x.values, w.mean, w.variances(), b_mean, b_var, stride)
    return GaussianTensor(mean.shape, mean, var, SpreadKind.VARIANCE)


def relu_moment_match(x: GaussianTensor) -> GaussianTensor:
    """Moment-matched rectifier; emits second raw moments."""
    _require_kind(x, SpreadKind.VARIANCE, "rectifier")
    mean, srm = backends.get().relu_mm(x.mean, x.spread)
    return GaussianTensor(x.shape, mean, srm, SpreadKind.SECOND_RAW_MOMENT)


def maxpool2_pfp(x: GaussianTensor) -> GaussianTensor:
    """2x2 stride-2 max pool via pairwise Gaussian-max moment matching."""
    _require_kind(x, SpreadKind.VARIANCE, "max pool")
    if len(x.shape) != 4:
        raise ShapeError(f"max pool expects (batch, channels, H, W), got {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError(
            f"max pool requires even spatial dims, got {x.shape[2]}x{x.shape[3]}")
    mean, var = backends.get().maxpool2_mm(x.mean, x.spread)
    return GaussianTensor(mean.shape, mean, var, SpreadKind.VARIANCE)


def flatten(x: GaussianTensor) -> GaussianTensor:
    """Collapse to (batch, rest), preserving row-major order and kind."""
    return x.reshape((x.shape[0], int(np.prod(x.shape[1:]))))


def forward(model: ModelGraph, x: DeterministicTensor) -> LogitDistribution:
    """Run the whole network in one pass, returning per-class logit moments.

    The first compute layer consumes the raw input; conversions between
    spread representations happen only where the plan calls for them.
    """
    if x.shape[1:] != model.input_shape:
        raise ShapeError(
            f"input shape {x.shape[1:]} does not match model input {model.input_shape}")
    steps = model.plan()
    val: GaussianTensor | DeterministicTensor = x
    for step in steps:
        layer = step.layer
        if isinstance(val, GaussianTensor) and step.convert is not None:
            val = convert_spread(val, step.convert)
        if isinstance(layer, Dense):
            val = (dense_pfp_det_input(val, layer.weights)
                   if isinstance(val, DeterministicTensor)
                   else dense_pfp(val, layer.weights))
        elif isinstance(layer, Conv2d):
            val = (conv2d_pfp_det_input(val, layer.weights, layer.stride)
                   if isinstance(val, DeterministicTensor)
                   else conv2d_pfp(val, layer.weights, layer.stride))
        elif isinstance(layer, ReLU):
            val = relu_moment_match(val)
        elif isinstance(layer, MaxPool2x2):
            val = maxpool2_pfp(val)
        elif isinstance(layer, Flatten):
            if isinstance(val, DeterministicTensor):
                val = DeterministicTensor((val.shape[0], int(np.prod(val.shape[1:]))),
                                          val.values.reshape(val.shape[0], -1))
            else:
                val = flatten(val)
    assert isinstance(val, GaussianTensor)
    if val.kind is not SpreadKind.VARIANCE:
        val = convert_spread(val, SpreadKind.VARIANCE)
    batch, classes = val.shape
    return LogitDistribution(batch, classes, val.mean, val.spread)
