"""Shared fixtures and model builders for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from pfp import (BiasConfig, Conv2d, Dense, DeterministicTensor, Flatten,
                 GaussianWeights, MaxPool2x2, ModelGraph, ReLU)
from pfp import backends


def available_backend_names() -> list[str]:
    return backends.available_backends()


@pytest.fixture(params=available_backend_names())
def each_backend(request):
    """Run a test once per installed kernel backend, restoring the default."""
    previous = backends.active_name()
    backends.set_backend(request.param)
    yield request.param
    backends.set_backend(previous)


def dense_weights(rng: np.random.Generator, out_w: int, in_w: int,
                  var_scale: float = 0.05, bias: str = "none") -> GaussianWeights:
    mean = rng.normal(0.0, 0.5, (out_w, in_w))
    var = rng.uniform(0.0, var_scale, (out_w, in_w))
    return GaussianWeights.from_moments(mean, var, _bias(rng, bias, out_w, var_scale))


def conv_weights(rng: np.random.Generator, out_c: int, in_c: int, kh: int, kw: int,
                 var_scale: float = 0.05, bias: str = "none") -> GaussianWeights:
    mean = rng.normal(0.0, 0.4, (out_c, in_c, kh, kw))
    var = rng.uniform(0.0, var_scale, (out_c, in_c, kh, kw))
    return GaussianWeights.from_moments(mean, var, _bias(rng, bias, out_c, var_scale))


def _bias(rng, kind: str, width: int, var_scale: float) -> BiasConfig:
    if kind == "none":
        return BiasConfig.none()
    if kind == "deterministic":
        return BiasConfig.deterministic(rng.normal(0.0, 0.2, width))
    return BiasConfig.probabilistic(rng.normal(0.0, 0.2, width),
                                    rng.uniform(0.0, var_scale, width))


def random_mlp(rng: np.random.Generator, widths: list[int], var_scale: float = 0.05,
               bias: str = "probabilistic", relu: bool = True,
               name: str = "mlp") -> ModelGraph:
    layers = []
    for i in range(len(widths) - 1):
        layers.append(Dense(dense_weights(rng, widths[i + 1], widths[i],
                                          var_scale, bias)))
        if relu and i < len(widths) - 2:
            layers.append(ReLU())
    return ModelGraph(name, (widths[0],), tuple(layers))


def lenet_style(rng: np.random.Generator, var_scale: float = 0.01,
                in_hw: int = 6, classes: int = 4,
                conv_var_scale: float | None = None) -> ModelGraph:
    """conv -> relu -> maxpool -> flatten -> dense on a small image."""
    cvs = var_scale if conv_var_scale is None else conv_var_scale
    flat = 3 * ((in_hw - 2) // 2) ** 2
    return ModelGraph("lenet-toy", (1, in_hw, in_hw), (
        Conv2d(conv_weights(rng, 3, 1, 3, 3, cvs, "deterministic"), 1),
        ReLU(),
        MaxPool2x2(),
        Flatten(),
        Dense(dense_weights(rng, classes, flat, var_scale, "probabilistic")),
    ))


def batch_input(rng: np.random.Generator, model: ModelGraph, batch: int) -> DeterministicTensor:
    return DeterministicTensor.from_array(
        rng.normal(0.0, 1.0, (batch,) + model.input_shape))
