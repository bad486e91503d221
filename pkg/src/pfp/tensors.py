"""Batched Gaussian value types and spread-representation conversion.

Every activation flowing through the engine is a :class:`GaussianTensor`:
a per-element mean plus a per-element *spread*, where the spread is either
a variance or a second raw moment E[x^2] = mu^2 + sigma^2.  Which of the
two is stored is part of the tensor's observable state (`kind`), because
compute layers and activations consume and produce different
representations.

All buffers are float64, C-contiguous, batch-major/row-major, and frozen
after construction.  Tensors are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import CorruptMoments, ShapeError

# Absolute slack when a second raw moment is converted back to a variance:
# values in [-EPS_REP, 0) are rounding debris and clamp to zero, anything
# below -EPS_REP is treated as corruption.
EPS_REP = 1e-9


class SpreadKind(Enum):
    """Which spread representation a tensor carries."""

    VARIANCE = "variance"
    SECOND_RAW_MOMENT = "second_raw_moment"


def _as_buffer(values, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, order="C", copy=True)
    if arr.shape != shape:
        if arr.size == int(np.prod(shape)):
            arr = arr.reshape(shape)
        else:
            raise ShapeError(
                f"{name} buffer has {arr.size} elements, shape {shape} needs "
                f"{int(np.prod(shape))}"
            )
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class GaussianTensor:
    """Mean plus spread for every element of a batched tensor.

    Construction checks structure only (matching buffer lengths); value
    invariants are checked by :func:`validate`, which reports rather than
    raises so that suspect tensors can be inspected.
    """

    shape: tuple[int, ...]
    mean: np.ndarray
    spread: np.ndarray
    kind: SpreadKind

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "mean", _as_buffer(self.mean, shape, "mean"))
        object.__setattr__(self, "spread", _as_buffer(self.spread, shape, "spread"))

    @classmethod
    def from_moments(cls, mean, variance) -> "GaussianTensor":
        """Build a VARIANCE-kind tensor from mean and variance arrays."""
        mean = np.asarray(mean, dtype=np.float64)
        return cls(mean.shape, mean, variance, SpreadKind.VARIANCE)

    @property
    def batch(self) -> int:
        return self.shape[0]

    def variances(self) -> np.ndarray:
        """Spread as variances, converting from E[x^2] if necessary."""
        if self.kind is SpreadKind.VARIANCE:
            return self.spread
        return _srm_to_var(self.mean, self.spread)

    def second_raw_moments(self) -> np.ndarray:
        """Spread as E[x^2], converting from variances if necessary."""
        if self.kind is SpreadKind.SECOND_RAW_MOMENT:
            return self.spread
        return self.spread + self.mean * self.mean

    def reshape(self, shape: Sequence[int]) -> "GaussianTensor":
        shape = tuple(int(d) for d in shape)
        return GaussianTensor(shape, self.mean.reshape(shape),
                              self.spread.reshape(shape), self.kind)


@dataclass(frozen=True)
class DeterministicTensor:
    """Plain point-valued tensor, used for raw network inputs."""

    shape: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        shape = tuple(int(d) for d in self.shape)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", _as_buffer(self.values, shape, "values"))

    @classmethod
    def from_array(cls, values) -> "DeterministicTensor":
        values = np.asarray(values, dtype=np.float64)
        return cls(values.shape, values)

    @property
    def batch(self) -> int:
        return self.shape[0]


@dataclass(frozen=True)
class LogitDistribution:
    """Per-class logit means and variances at the network output."""

    batch: int
    classes: int
    logit_mean: np.ndarray
    logit_var: np.ndarray

    def __post_init__(self):
        shape = (int(self.batch), int(self.classes))
        object.__setattr__(self, "logit_mean", _as_buffer(self.logit_mean, shape, "logit_mean"))
        object.__setattr__(self, "logit_var", _as_buffer(self.logit_var, shape, "logit_var"))


@dataclass(frozen=True)
class Violation:
    """First invariant violation found by :func:`validate`."""

    invariant: str
    index: Optional[tuple[int, ...]]
    message: str


def _first_bad_index(mask: np.ndarray) -> tuple[int, ...]:
    flat = int(np.argmax(mask))
    return tuple(int(i) for i in np.unravel_index(flat, mask.shape))


def validate(t: GaussianTensor) -> Optional[Violation]:
    """Check value invariants; returns the first violation or None.

    Never raises: this is the inspection path for suspect data.
    """
    if t.mean.shape != t.shape or t.spread.shape != t.shape:
        return Violation("buffer-shape", None, "buffer shapes do not match declared shape")
    bad = ~np.isfinite(t.mean)
    if bad.any():
        idx = _first_bad_index(bad)
        return Violation("finite-mean", idx, f"non-finite mean at {idx}")
    bad = ~np.isfinite(t.spread)
    if bad.any():
        idx = _first_bad_index(bad)
        return Violation("finite-spread", idx, f"non-finite spread at {idx}")
    if t.kind is SpreadKind.VARIANCE:
        bad = t.spread < 0.0
        if bad.any():
            idx = _first_bad_index(bad)
            return Violation("variance-nonnegative", idx,
                             f"negative variance {t.spread[idx]} at {idx}")
    else:
        bad = t.spread < t.mean * t.mean - EPS_REP
        if bad.any():
            idx = _first_bad_index(bad)
            return Violation("srm-lower-bound", idx,
                             f"second raw moment {t.spread[idx]} below mean^2 at {idx}")
    return None


def _srm_to_var(mean: np.ndarray, srm: np.ndarray) -> np.ndarray:
    var = srm - mean * mean
    low = var < -EPS_REP
    if low.any():
        idx = _first_bad_index(low)
        raise CorruptMoments(
            f"second raw moment implies variance {var[idx]} < -{EPS_REP} at {idx}"
        )
    return np.maximum(var, 0.0)


def convert_spread(t: GaussianTensor, target: SpreadKind) -> GaussianTensor:
    """Rewrite the spread buffer into the target representation.

    Means are preserved exactly.  Variance -> E[x^2] adds mu^2; the reverse
    subtracts it, clamping rounding debris in [-EPS_REP, 0) to zero and
    raising :class:`CorruptMoments` below that band.
    """
    if target is t.kind:
        return t
    if target is SpreadKind.SECOND_RAW_MOMENT:
        spread = t.spread + t.mean * t.mean
    else:
        spread = _srm_to_var(t.mean, t.spread)
    return GaussianTensor(t.shape, t.mean, spread, target)
