"""Sampling-based reference path: draw weight realizations, run plain
deterministic forward passes, and report empirical predictive moments.

This is the independent oracle the closed-form pass is validated against.

Randomness contract
-------------------
Sample ``i`` owns the counter-based stream ``Philox4x64(key=(seed, i))``.
Standard normals come from the classical Box-Muller transform applied to
consecutive uniform pairs: pair ``(u[2k], u[2k+1])`` yields

    r = sqrt(-2 ln(1 - u[2k])),  theta = 2 pi u[2k+1]
    z[2k] = r cos(theta),        z[2k+1] = r sin(theta)

Within a sample, parameters consume normals in flattened layer order
(weights row-major, then probabilistic bias, layer by layer).  A draw
therefore depends only on (seed, sample index, parameter index) and never
on chunking or worker count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import InsufficientSamples, PfpError, ShapeError
from .layers import (COMPUTE_LAYERS, Dense, Flatten, MaxPool2x2, ModelGraph,
                     ReLU)
from .tensors import DeterministicTensor

_CHUNK = 512  # samples per vectorized block; results do not depend on it


@dataclass(frozen=True)
class SampleSet:
    """Logit samples from repeated deterministic passes: (n, batch, classes)."""

    n_samples: int
    logits: np.ndarray
    seed: int

    def __post_init__(self):
        logits = np.ascontiguousarray(self.logits, dtype=np.float64)
        if logits.ndim != 3 or logits.shape[0] != self.n_samples:
            raise ShapeError(
                f"logit buffer shape {logits.shape} does not match n={self.n_samples}")
        logits.flags.writeable = False
        object.__setattr__(self, "logits", logits)


_MASK64 = 0xFFFFFFFFFFFFFFFF


def _uniform_block(seed: int, start: int, stop: int, n_u: int) -> np.ndarray:
    """Rows of uniforms, row i from the Philox stream keyed (seed, start+i)."""
    out = np.empty((stop - start, n_u))
    for i in range(start, stop):
        key = np.array([seed & _MASK64, i & _MASK64], dtype=np.uint64)
        np.random.Generator(np.random.Philox(key=key)).random(out=out[i - start])
    return out


def _box_muller(u: np.ndarray) -> np.ndarray:
    # Elementwise along the last axis; identical results for any leading
    # shape, so block and single-stream paths produce the same bits.
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0::2]))
    theta = (2.0 * np.pi) * u[:, 1::2]
    z = np.empty(u.shape)
    z[:, 0::2] = r * np.cos(theta)
    z[:, 1::2] = r * np.sin(theta)
    return z


def normal_block(seed: int, start: int, stop: int, count: int) -> np.ndarray:
    """Standard normals for streams start..stop-1, shape (stop-start, count)."""
    n_u = 2 * ((count + 1) // 2)
    return np.ascontiguousarray(_box_muller(_uniform_block(seed, start, stop, n_u))[:, :count])


def normal_stream(seed: int, stream: int, count: int) -> np.ndarray:
    """Deterministic standard normals for (seed, stream); see module docs."""
    return normal_block(seed, stream, stream + 1, count)[0]


def _sampled_params(model: ModelGraph, z: np.ndarray) -> list[tuple]:
    """Slice one sample's normal vector into per-layer (weights, bias) draws.

    Returned entries mirror the layer list: compute layers map to
    ('dense'|'conv', w, b[, stride]), the rest to markers consumed by the
    deterministic forward.
    """
    out: list[tuple] = []
    pos = 0
    for layer in model.layers:
        if isinstance(layer, COMPUTE_LAYERS):
            w_spec = layer.weights
            n_w = w_spec.mean.size
            sigma = np.sqrt(w_spec.variances())
            w = w_spec.mean + sigma * z[pos:pos + n_w].reshape(w_spec.mean.shape)
            pos += n_w
            bias = w_spec.bias
            width = w_spec.out_width
            if bias.kind == "probabilistic":
                b = bias.mean + np.sqrt(bias.variance) * z[pos:pos + width]
                pos += width
            elif bias.kind == "deterministic":
                b = bias.mean.copy()
            else:
                b = np.zeros(width)
            if isinstance(layer, Dense):
                out.append(("dense", w, b))
            else:
                out.append(("conv", w, b, layer.stride))
        elif isinstance(layer, ReLU):
            out.append(("relu",))
        elif isinstance(layer, MaxPool2x2):
            out.append(("pool",))
        elif isinstance(layer, Flatten):
            out.append(("flatten",))
    return out


def sample_deterministic_model(model: ModelGraph, sample_index: int, seed: int) -> list[tuple]:
    """One weight realization: every parameter drawn as mean + sigma * eps."""
    z = normal_stream(seed, sample_index, model.n_params())
    return _sampled_params(model, z)


def deterministic_forward(layers: list[tuple], x: np.ndarray) -> np.ndarray:
    """Plain forward pass of one sampled (point-weight) network."""
    stacked: list[tuple] = []
    for entry in layers:
        if entry[0] == "dense":
            stacked.append(("dense", entry[1][None], entry[2][None]))
        elif entry[0] == "conv":
            stacked.append(("conv", entry[1][None], entry[2][None], entry[3]))
        else:
            stacked.append(entry)
    return _det_forward_chunk(stacked, np.asarray(x, dtype=np.float64)[None])[0]


def _det_forward_chunk(layers: list[tuple], x: np.ndarray) -> np.ndarray:
    """Forward a chunk of sampled networks: x is (S, B, ...) stacked."""
    kern = backends.get()
    val = x
    for entry in layers:
        tag = entry[0]
        if tag == "dense":
            val = kern.det_dense_chunk(val, entry[1], entry[2])
        elif tag == "conv":
            val = kern.det_conv2d_chunk(val, entry[1], entry[2], entry[3])
        elif tag == "relu":
            val = np.maximum(val, 0.0)
        elif tag == "pool":
            s, b, c, h, w = val.shape
            val = val.reshape(s, b, c, h // 2, 2, w // 2, 2).max(axis=(4, 6))
        elif tag == "flatten":
            val = val.reshape(val.shape[0], val.shape[1], -1)
    return val


def mc_predict(model: ModelGraph, x: DeterministicTensor, n: int, seed: int) -> SampleSet:
    """n independent deterministic forward passes over sampled models."""
    if n < 1:
        raise InsufficientSamples("mc_predict needs n >= 1")
    if x.shape[1:] != model.input_shape:
        raise ShapeError(
            f"input shape {x.shape[1:]} does not match model input {model.input_shape}")
    model.plan()  # validates the chain before any sampling work
    n_params = model.n_params()
    batch = x.shape[0]
    classes = model.n_classes
    logits = np.empty((n, batch, classes))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        stacked = _stack_sampled_layers(model, start, stop, seed, n_params)
        logits[start:stop] = _det_forward_chunk(stacked, _tile_input(x.values, stop - start))
    return SampleSet(n, logits, seed)


def _tile_input(values: np.ndarray, n_s: int) -> np.ndarray:
    return np.broadcast_to(values, (n_s,) + values.shape)


def _stack_sampled_layers(model: ModelGraph, start: int, stop: int, seed: int,
                          n_params: int) -> list[tuple]:
    draws = normal_block(seed, start, stop, n_params)
    n_s = stop - start
    out: list[tuple] = []
    pos = 0
    for layer in model.layers:
        if isinstance(layer, COMPUTE_LAYERS):
            w_spec = layer.weights
            n_w = w_spec.mean.size
            sigma = np.sqrt(w_spec.variances())
            z_w = draws[:, pos:pos + n_w].reshape((n_s,) + w_spec.mean.shape)
            w = w_spec.mean[None] + sigma[None] * z_w
            pos += n_w
            bias = w_spec.bias
            width = w_spec.out_width
            if bias.kind == "probabilistic":
                b = bias.mean[None] + np.sqrt(bias.variance)[None] * draws[:, pos:pos + width]
                pos += width
            elif bias.kind == "deterministic":
                b = np.broadcast_to(bias.mean, (n_s, width)).copy()
            else:
                b = np.zeros((n_s, width))
            if isinstance(layer, Dense):
                out.append(("dense", w, b))
            else:
                out.append(("conv", w, b, layer.stride))
        elif isinstance(layer, ReLU):
            out.append(("relu",))
        elif isinstance(layer, MaxPool2x2):
            out.append(("pool",))
        elif isinstance(layer, Flatten):
            out.append(("flatten",))
    return out


def empirical_moments(s: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Per-logit sample mean and unbiased (n-1) variance."""
    if s.n_samples < 2:
        raise InsufficientSamples("variance estimation needs n >= 2")
    mean = s.logits.mean(axis=0)
    var = s.logits.var(axis=0, ddof=1)
    return mean, var


def scalar_mc_moments(transform: str, mu: float, var: float, n: int, seed: int,
                      mu2: float = 0.0, var2: float = 1.0) -> tuple[float, float]:
    """Monte-Carlo (E[f], E[f^2]) of a named elementwise transform.

    Supported transforms: 'relu', 'identity', and 'max_pair' (maximum with
    an independent N(mu2, var2) drawn from stream 1).
    """
    if n < 1:
        raise InsufficientSamples("scalar_mc_moments needs n >= 1")
    x = mu + np.sqrt(var) * normal_stream(seed, 0, n)
    if transform == "relu":
        f = np.maximum(x, 0.0)
    elif transform == "identity":
        f = x
    elif transform == "max_pair":
        y = mu2 + np.sqrt(var2) * normal_stream(seed, 1, n)
        f = np.maximum(x, y)
    else:
        raise PfpError(f"unknown transform {transform!r}")
    return float(f.mean()), float((f * f).mean())
