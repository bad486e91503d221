"""Layer parameter types, the model graph, and chain validation.

The engine follows fixed layer I/O conventions:

* compute layers (dense, conv) consume second raw moments and emit
  variances; the first compute layer instead consumes the raw
  deterministic input,
* the rectifier consumes variances and emits second raw moments,
* 2x2 max pool consumes and produces variances.

At the two places the conventions do not line up directly, a sanctioned
conversion is inserted: second-raw-moment -> variance in front of a max
pool, and variance -> second raw moment in front of a compute layer.
Any other mismatch (e.g. an activation fed second raw moments, or an
activation before the first compute layer) is rejected outright.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional, Union

import numpy as np

from .errors import ConventionMismatch, PfpError, ShapeError
from .tensors import EPS_REP, SpreadKind


@dataclass(frozen=True)
class BiasConfig:
    """One of: no bias, deterministic values, or Gaussian (mean, variance)."""

    kind: str  # 'none' | 'deterministic' | 'probabilistic'
    mean: Optional[np.ndarray] = None
    variance: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("none", "deterministic", "probabilistic"):
            raise ValueError(f"unknown bias kind {self.kind!r}")
        if self.kind == "none":
            if self.mean is not None or self.variance is not None:
                raise ValueError("bias kind 'none' carries no buffers")
            return
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        mean.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        if self.kind == "probabilistic":
            var = np.ascontiguousarray(self.variance, dtype=np.float64)
            if var.shape != mean.shape:
                raise ShapeError("bias mean and variance shapes differ")
            if (var < 0.0).any():
                raise ValueError("probabilistic bias variance must be >= 0")
            var.flags.writeable = False
            object.__setattr__(self, "variance", var)
        elif self.variance is not None:
            raise ValueError("deterministic bias carries no variance buffer")

    @classmethod
    def none(cls) -> "BiasConfig":
        return cls("none")

    @classmethod
    def deterministic(cls, values) -> "BiasConfig":
        return cls("deterministic", np.asarray(values, dtype=np.float64))

    @classmethod
    def probabilistic(cls, means, variances) -> "BiasConfig":
        return cls("probabilistic", np.asarray(means, dtype=np.float64),
                   np.asarray(variances, dtype=np.float64))

    def check_width(self, width: int) -> None:
        if self.kind != "none" and self.mean.shape != (width,):
            raise ShapeError(
                f"bias width {self.mean.shape} does not match output width {width}")

    def mean_or_zeros(self, width: int) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(width)
        return self.mean

    def var_or_zeros(self, width: int) -> np.ndarray:
        if self.kind == "probabilistic":
            return self.variance
        return np.zeros(width)

    def n_params(self) -> int:
        """Number of sampled scalars this bias contributes to a weight draw."""
        return 0 if self.kind != "probabilistic" else self.mean.size


@dataclass(frozen=True)
class GaussianWeights:
    """Per-layer Gaussian weight parameters.

    ``mean``/``spread`` are (out_features, in_features) for dense layers
    and (out_channels, in_channels, kh, kw) for convolutions.  The spread
    buffer is interpreted per ``kind``; loaders convert to whichever kind
    the consuming operator prefers.
    """

    mean: np.ndarray
    spread: np.ndarray
    kind: SpreadKind
    bias: BiasConfig

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        spread = np.ascontiguousarray(self.spread, dtype=np.float64)
        if mean.shape != spread.shape:
            raise ShapeError("weight mean and spread shapes differ")
        if self.kind is SpreadKind.VARIANCE:
            if (spread < 0.0).any():
                raise ValueError("weight variances must be >= 0")
        else:
            if (spread < mean * mean - EPS_REP).any():
                raise ValueError("weight second raw moments must be >= mean^2")
        mean.flags.writeable = False
        spread.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "spread", spread)
        self.bias.check_width(mean.shape[0])

    @classmethod
    def from_moments(cls, mean, variance, bias: Optional[BiasConfig] = None) -> "GaussianWeights":
        return cls(np.asarray(mean, dtype=np.float64),
                   np.asarray(variance, dtype=np.float64),
                   SpreadKind.VARIANCE, bias or BiasConfig.none())

    @property
    def out_width(self) -> int:
        return self.mean.shape[0]

    def variances(self) -> np.ndarray:
        if self.kind is SpreadKind.VARIANCE:
            return self.spread
        return np.maximum(self.spread - self.mean * self.mean, 0.0)

    def second_raw_moments(self) -> np.ndarray:
        if self.kind is SpreadKind.SECOND_RAW_MOMENT:
            return self.spread
        return self.spread + self.mean * self.mean

    def with_kind(self, kind: SpreadKind) -> "GaussianWeights":
        if kind is self.kind:
            return self
        spread = (self.second_raw_moments() if kind is SpreadKind.SECOND_RAW_MOMENT
                  else self.variances())
        return GaussianWeights(self.mean, spread, kind, self.bias)

    def n_params(self) -> int:
        return self.mean.size + self.bias.n_params()


@dataclass(frozen=True)
class Dense:
    weights: GaussianWeights

    def __post_init__(self):
        if self.weights.mean.ndim != 2:
            raise ShapeError("dense weights must be rank 2 (out, in)")

    @property
    def in_features(self) -> int:
        return self.weights.mean.shape[1]

    @property
    def out_features(self) -> int:
        return self.weights.mean.shape[0]


@dataclass(frozen=True)
class Conv2d:
    weights: GaussianWeights
    stride: int = 1

    def __post_init__(self):
        if self.weights.mean.ndim != 4:
            raise ShapeError("conv weights must be rank 4 (out_ch, in_ch, kh, kw)")
        if self.stride < 1:
            raise ShapeError("conv stride must be >= 1")

    @property
    def in_channels(self) -> int:
        return self.weights.mean.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.mean.shape[0]

    @property
    def kernel(self) -> tuple[int, int]:
        return self.weights.mean.shape[2], self.weights.mean.shape[3]


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class MaxPool2x2:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


LayerSpec = Union[Dense, Conv2d, ReLU, MaxPool2x2, Flatten]

COMPUTE_LAYERS = (Dense, Conv2d)


class PropState(Enum):
    """Representation of the value flowing between layers."""

    DET = "deterministic"
    VAR = "variance"
    SRM = "second_raw_moment"


@dataclass(frozen=True)
class LayerStep:
    """One resolved step of the propagation plan."""

    layer: LayerSpec
    in_state: PropState
    convert: Optional[SpreadKind]  # sanctioned pre-conversion, if any
    out_state: PropState
    out_shape: tuple[int, ...]


def _conv_out_hw(h: int, w: int, kh: int, kw: int, stride: int) -> tuple[int, int]:
    eh, rem_h = divmod(h - kh + stride, stride)
    ew, rem_w = divmod(w - kw + stride, stride)
    if rem_h or rem_w or eh < 1 or ew < 1:
        raise ShapeError(
            f"conv output dims for input {h}x{w}, kernel {kh}x{kw}, "
            f"stride {stride} are not positive integers")
    return eh, ew


def plan_propagation(input_shape: tuple[int, ...],
                     layers: tuple[LayerSpec, ...]) -> list[LayerStep]:
    """Resolve states, conversions and shapes for a layer chain.

    Raises ConventionMismatch when the chain cannot compose under the
    layer I/O conventions, ShapeError when dimensions do not line up.
    """
    if not layers:
        raise ConventionMismatch("model has no layers")
    state = PropState.DET
    shape = tuple(int(d) for d in input_shape)
    steps: list[LayerStep] = []
    for idx, layer in enumerate(layers):
        in_state = state
        convert = None
        if isinstance(layer, Dense):
            if len(shape) != 1:
                raise ShapeError(
                    f"layer {idx}: dense expects a flat input, got shape {shape}")
            if shape[0] != layer.in_features:
                raise ShapeError(
                    f"layer {idx}: dense expects width {layer.in_features}, got {shape[0]}")
            if state is PropState.VAR:
                convert = SpreadKind.SECOND_RAW_MOMENT
            state, shape = PropState.VAR, (layer.out_features,)
        elif isinstance(layer, Conv2d):
            if len(shape) != 3:
                raise ShapeError(
                    f"layer {idx}: conv expects (channels, H, W) input, got {shape}")
            if shape[0] != layer.in_channels:
                raise ShapeError(
                    f"layer {idx}: conv expects {layer.in_channels} channels, got {shape[0]}")
            kh, kw = layer.kernel
            eh, ew = _conv_out_hw(shape[1], shape[2], kh, kw, layer.stride)
            if state is PropState.VAR:
                convert = SpreadKind.SECOND_RAW_MOMENT
            state, shape = PropState.VAR, (layer.out_channels, eh, ew)
        elif isinstance(layer, ReLU):
            if state is not PropState.VAR:
                raise ConventionMismatch(
                    f"layer {idx}: rectifier requires variance input, chain "
                    f"provides {state.value}")
            state = PropState.SRM
        elif isinstance(layer, MaxPool2x2):
            if state is PropState.DET:
                raise ConventionMismatch(
                    f"layer {idx}: max pool requires Gaussian input, chain "
                    "provides raw deterministic values")
            if len(shape) != 3:
                raise ShapeError(f"layer {idx}: max pool expects (channels, H, W), got {shape}")
            if shape[1] % 2 or shape[2] % 2:
                raise ShapeError(
                    f"layer {idx}: max pool requires even spatial dims, got {shape[1]}x{shape[2]}")
            if state is PropState.SRM:
                convert = SpreadKind.VARIANCE
            state, shape = PropState.VAR, (shape[0], shape[1] // 2, shape[2] // 2)
        elif isinstance(layer, Flatten):
            shape = (int(np.prod(shape)),)
        else:
            raise ConventionMismatch(f"layer {idx}: unknown layer type {type(layer).__name__}")
        steps.append(LayerStep(layer, in_state, convert, state, shape))
    if state is PropState.DET:
        raise ConventionMismatch("model contains no compute layer")
    if len(shape) != 1:
        raise ConventionMismatch(
            f"model must end in a flat class vector, final shape is {shape}")
    return steps


@dataclass(frozen=True)
class ModelGraph:
    """Ordered layer chain plus metadata; immutable after construction."""

    name: str
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    calibration_factor: float = 1.0
    format_version: int = 1

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        cf = float(self.calibration_factor)
        if not (cf > 0.0) or not np.isfinite(cf):
            raise PfpError(f"calibration factor must be positive, got {cf}")
        object.__setattr__(self, "calibration_factor", cf)

    def plan(self) -> list[LayerStep]:
        return plan_propagation(self.input_shape, self.layers)

    @property
    def n_classes(self) -> int:
        return self.plan()[-1].out_shape[0]

    def is_linear_chain(self) -> bool:
        """True when no moment-matching layer (ReLU/max pool) is present."""
        return not any(isinstance(l, (ReLU, MaxPool2x2)) for l in self.layers)

    def n_params(self) -> int:
        return sum(l.weights.n_params() for l in self.layers
                   if isinstance(l, COMPUTE_LAYERS))


def apply_calibration(model: ModelGraph, factor: float) -> ModelGraph:
    """Scale every weight and probabilistic-bias variance by ``factor``.

    Means are untouched; weights held as second raw moments are converted
    through variances for the scaling and back again.  The graph's
    calibration_factor accumulates the applied factor.
    """
    factor = float(factor)
    if not (factor > 0.0) or not np.isfinite(factor):
        raise PfpError(f"calibration factor must be positive, got {factor}")
    new_layers: list[LayerSpec] = []
    for layer in model.layers:
        if isinstance(layer, COMPUTE_LAYERS):
            w = layer.weights
            scaled = GaussianWeights(w.mean, w.variances() * factor,
                                     SpreadKind.VARIANCE, _scale_bias(w.bias, factor))
            new_layers.append(replace(layer, weights=scaled.with_kind(w.kind)))
        else:
            new_layers.append(layer)
    return ModelGraph(model.name, model.input_shape, tuple(new_layers),
                      model.calibration_factor * factor, model.format_version)


def _scale_bias(bias: BiasConfig, factor: float) -> BiasConfig:
    if bias.kind != "probabilistic":
        return bias
    return BiasConfig.probabilistic(bias.mean, bias.variance * factor)
