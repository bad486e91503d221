"""Bit-exact on-disk containers for models and tensors.

ModelFile layout (all integers little-endian):

    magic "PFPM" | u32 version | u64 manifest_len | manifest JSON | payload

The manifest lists layers, shapes, bias configurations, the calibration
factor and byte offsets; the payload is the concatenation of all tensors
as IEEE-754 float32, row-major, in manifest order, tiled exactly (offset
0, no gaps, no trailing bytes).  Weights are always stored as means and
variances; the loader widens to float64 and converts each compute layer's
spread to the representation its operator prefers (variances for the
first compute layer, second raw moments after that).

TensorFile layout:

    magic "PFPT" | u32 version | u32 rank | rank x u64 dims | u32 dtype | payload

with dtype code 1 = float32.

Loading is total: any malformed file raises a :class:`FormatError`
subclass, never an unhandled exception and never a silently wrong model.
"""

from __future__ import annotations

import json
import struct
from typing import Any

import numpy as np

from .errors import (BadMagic, ConventionMismatch, ManifestError,
                     NegativeVariance, ShapeError, UnsupportedVersion)
from .layers import (BiasConfig, Conv2d, Dense, Flatten, GaussianWeights,
                     MaxPool2x2, ModelGraph, ReLU, SpreadKind)
from .tensors import DeterministicTensor

MODEL_MAGIC = b"PFPM"
TENSOR_MAGIC = b"PFPT"
FORMAT_VERSION = 1
_F32 = "<f4"
_MAX_RANK = 32


# ------------------------------------------------------------------ save

def _tensor_entry(offset: int, shape: tuple[int, ...]) -> dict[str, Any]:
    return {"offset": offset, "shape": list(int(d) for d in shape)}


def save_model(model: ModelGraph, path) -> None:
    """Write a validated graph; byte-deterministic for equal graphs."""
    if not model.layers:
        raise ManifestError("refusing to save a model with no layers")
    model.plan()
    payload_parts: list[bytes] = []
    offset = 0

    def push(arr: np.ndarray, shape: tuple[int, ...]) -> dict[str, Any]:
        nonlocal offset
        entry = _tensor_entry(offset, shape)
        raw = np.ascontiguousarray(arr, dtype=np.float64).astype(_F32).tobytes()
        payload_parts.append(raw)
        offset += len(raw)
        return entry

    layer_entries: list[dict[str, Any]] = []
    for layer in model.layers:
        if isinstance(layer, (Dense, Conv2d)):
            w = layer.weights
            entry: dict[str, Any] = {
                "kind": "dense" if isinstance(layer, Dense) else "conv2d",
                "spread_kind": "variance",
                "bias": w.bias.kind,
                "tensors": {
                    "weight_mean": push(w.mean, w.mean.shape),
                    "weight_variance": push(w.variances(), w.mean.shape),
                },
            }
            if isinstance(layer, Conv2d):
                entry["stride"] = layer.stride
            if w.bias.kind != "none":
                entry["tensors"]["bias_mean"] = push(w.bias.mean, w.bias.mean.shape)
            if w.bias.kind == "probabilistic":
                entry["tensors"]["bias_variance"] = push(
                    w.bias.variance, w.bias.variance.shape)
            layer_entries.append(entry)
        elif isinstance(layer, ReLU):
            layer_entries.append({"kind": "relu"})
        elif isinstance(layer, MaxPool2x2):
            layer_entries.append({"kind": "maxpool2x2"})
        elif isinstance(layer, Flatten):
            layer_entries.append({"kind": "flatten"})

    manifest = {
        "calibration_factor": model.calibration_factor,
        "format_version": FORMAT_VERSION,
        "input_shape": list(model.input_shape),
        "layers": layer_entries,
        "name": model.name,
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for part in payload_parts:
            fh.write(part)


# ------------------------------------------------------------------ load

def _want(d: dict, key: str, types, ctx: str):
    if not isinstance(d, dict) or key not in d:
        raise ManifestError(f"manifest missing {ctx}.{key}")
    val = d[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise ManifestError(f"manifest field {ctx}.{key} has wrong type")
    return val


def _want_shape(entry: dict, ctx: str, rank: int | None = None) -> tuple[int, ...]:
    shape = _want(entry, "shape", list, ctx)
    if not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in shape):
        raise ManifestError(f"manifest field {ctx}.shape must be positive integers")
    if rank is not None and len(shape) != rank:
        raise ManifestError(f"manifest field {ctx}.shape must have rank {rank}")
    return tuple(shape)


class _PayloadReader:
    """Sequential, exact-tiling reader over the payload bytes."""

    def __init__(self, payload: bytes):
        self.payload = payload
        self.cursor = 0

    def read(self, entry: dict, ctx: str, rank: int | None = None) -> np.ndarray:
        if not isinstance(entry, dict):
            raise ManifestError(f"manifest entry {ctx} must be an object")
        offset = _want(entry, "offset", int, ctx)
        shape = _want_shape(entry, ctx, rank)
        if offset != self.cursor:
            raise ManifestError(
                f"tensor {ctx} at offset {offset} breaks the expected tiling "
                f"(cursor {self.cursor})")
        count = 1
        for d in shape:
            count *= d
        nbytes = count * 4
        if offset + nbytes > len(self.payload):
            raise ManifestError(
                f"tensor {ctx} extends past the end of the payload")
        arr = np.frombuffer(self.payload, dtype=_F32, count=count, offset=offset)
        self.cursor = offset + nbytes
        out = arr.astype(np.float64).reshape(shape)
        if not np.isfinite(out).all():
            raise ManifestError(f"tensor {ctx} contains non-finite values")
        return out

    def finish(self) -> None:
        if self.cursor != len(self.payload):
            raise ManifestError(
                f"payload has {len(self.payload)} bytes, manifest consumes {self.cursor}")


def _check_variance(arr: np.ndarray, ctx: str) -> np.ndarray:
    if (arr < 0.0).any():
        raise NegativeVariance(f"tensor {ctx} contains a negative variance")
    return arr


def load_model(path) -> ModelGraph:
    """Read, validate and widen a ModelFile; see module docs for errors."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise BadMagic(f"not a model file (magic {data[:4]!r})")
    if len(data) < 16:
        raise ManifestError("file truncated inside the header")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"model format version {version} not supported")
    manifest_len = struct.unpack_from("<Q", data, 8)[0]
    if 16 + manifest_len > len(data):
        raise ManifestError("manifest extends past the end of the file")
    try:
        manifest = json.loads(data[16:16 + manifest_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from None
    if not isinstance(manifest, dict):
        raise ManifestError("manifest must be a JSON object")
    payload = data[16 + manifest_len:]

    mf_version = _want(manifest, "format_version", int, "manifest")
    if mf_version != version:
        raise ManifestError(
            f"manifest format_version {mf_version} disagrees with header {version}")
    cal = _want(manifest, "calibration_factor", (int, float), "manifest")
    if not np.isfinite(cal) or cal <= 0.0:
        raise ManifestError(f"calibration_factor must be positive, got {cal}")
    name = _want(manifest, "name", str, "manifest")
    input_shape = _want(manifest, "input_shape", list, "manifest")
    if not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1
               for d in input_shape) or not 1 <= len(input_shape) <= 4:
        raise ManifestError("input_shape must be a short list of positive integers")
    layer_entries = _want(manifest, "layers", list, "manifest")
    if not layer_entries:
        raise ManifestError("model declares no layers")

    reader = _PayloadReader(payload)
    layers: list = []
    seen_compute = False
    try:
        for i, entry in enumerate(layer_entries):
            ctx = f"layers[{i}]"
            kind = _want(entry, "kind", str, ctx)
            if kind in ("dense", "conv2d"):
                spread_kind = _want(entry, "spread_kind", str, ctx)
                if spread_kind != "variance":
                    raise ManifestError(
                        f"{ctx}: stored spread kind must be 'variance', got {spread_kind!r}")
                tensors = _want(entry, "tensors", dict, ctx)
                rank = 2 if kind == "dense" else 4
                w_mean = reader.read(_want(tensors, "weight_mean", dict, ctx),
                                     f"{ctx}.weight_mean", rank)
                w_var = _check_variance(
                    reader.read(_want(tensors, "weight_variance", dict, ctx),
                                f"{ctx}.weight_variance", rank),
                    f"{ctx}.weight_variance")
                if w_var.shape != w_mean.shape:
                    raise ManifestError(f"{ctx}: weight mean/variance shapes differ")
                bias_kind = _want(entry, "bias", str, ctx)
                if bias_kind == "none":
                    bias = BiasConfig.none()
                elif bias_kind == "deterministic":
                    b_mean = reader.read(_want(tensors, "bias_mean", dict, ctx),
                                         f"{ctx}.bias_mean", 1)
                    bias = BiasConfig.deterministic(b_mean)
                elif bias_kind == "probabilistic":
                    b_mean = reader.read(_want(tensors, "bias_mean", dict, ctx),
                                         f"{ctx}.bias_mean", 1)
                    b_var = _check_variance(
                        reader.read(_want(tensors, "bias_variance", dict, ctx),
                                    f"{ctx}.bias_variance", 1),
                        f"{ctx}.bias_variance")
                    bias = BiasConfig.probabilistic(b_mean, b_var)
                else:
                    raise ManifestError(f"{ctx}: unknown bias kind {bias_kind!r}")
                weights = GaussianWeights(w_mean, w_var, SpreadKind.VARIANCE, bias)
                if not seen_compute:
                    seen_compute = True  # first compute layer keeps variances
                else:
                    weights = weights.with_kind(SpreadKind.SECOND_RAW_MOMENT)
                if kind == "dense":
                    layers.append(Dense(weights))
                else:
                    stride = _want(entry, "stride", int, ctx)
                    if stride < 1:
                        raise ManifestError(f"{ctx}: stride must be >= 1")
                    layers.append(Conv2d(weights, stride))
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "maxpool2x2":
                layers.append(MaxPool2x2())
            elif kind == "flatten":
                layers.append(Flatten())
            else:
                raise ManifestError(f"{ctx}: unknown layer kind {kind!r}")
        reader.finish()
        graph = ModelGraph(name, tuple(input_shape), tuple(layers), cal, version)
        graph.plan()
    except (ShapeError, ValueError) as exc:
        # Structural lies inside an otherwise readable manifest.
        raise ManifestError(str(exc)) from None
    except ConventionMismatch:
        raise
    return graph


# ------------------------------------------------------------ tensor file

def save_tensor(t, path) -> None:
    """Write a DeterministicTensor (or array) as a float32 TensorFile."""
    values = t.values if isinstance(t, DeterministicTensor) else np.asarray(t)
    arr = np.array(values, dtype=np.float64, order="C").astype(_F32)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            fh.write(struct.pack("<Q", d))
        fh.write(struct.pack("<I", 1))
        fh.write(arr.tobytes())


def load_tensor(path) -> DeterministicTensor:
    """Read a TensorFile back as a float64 DeterministicTensor."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 or data[:4] != TENSOR_MAGIC:
        raise BadMagic(f"not a tensor file (magic {data[:4]!r})")
    if len(data) < 12:
        raise ManifestError("file truncated inside the header")
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"tensor format version {version} not supported")
    rank = struct.unpack_from("<I", data, 8)[0]
    if rank > _MAX_RANK:
        raise ManifestError(f"tensor rank {rank} exceeds limit {_MAX_RANK}")
    header_end = 12 + 8 * rank + 4
    if len(data) < header_end:
        raise ManifestError("file truncated inside the dimension list")
    dims = struct.unpack_from(f"<{rank}Q", data, 12) if rank else ()
    if any(d < 1 for d in dims):
        raise ManifestError(f"tensor dims must be positive, got {dims}")
    dtype_code = struct.unpack_from("<I", data, 12 + 8 * rank)[0]
    if dtype_code != 1:
        raise UnsupportedVersion(f"unsupported dtype code {dtype_code}")
    count = 1
    for d in dims:
        count *= int(d)
    payload = data[header_end:]
    if len(payload) != count * 4:
        raise ManifestError(
            f"payload length {len(payload)} does not match {count} float32 elements")
    values = np.frombuffer(payload, dtype=_F32, count=count).astype(np.float64)
    shape = tuple(int(d) for d in dims)
    return DeterministicTensor(shape, values.reshape(shape))
