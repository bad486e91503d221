"""Exception hierarchy for the engine.

All engine-raised errors derive from :class:`PfpError` so callers (and the
CLI) can distinguish our failures from genuine bugs.  File-format problems
derive from :class:`FormatError`; the loader guarantees that any malformed
input file raises one of its subclasses and never escapes with a bare
``ValueError``/``KeyError``.
"""

from __future__ import annotations


class PfpError(Exception):
    """Base class for all engine errors."""


class ShapeError(PfpError):
    """Tensor or parameter dimensions do not line up."""


class WrongSpreadKind(PfpError):
    """An operator received a tensor in the wrong spread representation."""


class CorruptMoments(PfpError):
    """A second-raw-moment buffer implies a negative variance beyond slack."""


class InsufficientSamples(PfpError):
    """A sample-based estimator was asked for more than the samples allow."""


class ConventionMismatch(PfpError):
    """A layer chain cannot compose under the layer I/O conventions."""


class FormatError(PfpError):
    """Base class for on-disk container problems."""


class BadMagic(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersion(FormatError):
    """File declares a format version this build does not understand."""


class ManifestError(FormatError):
    """Manifest is unreadable or inconsistent with the payload."""


class NegativeVariance(FormatError):
    """A stored variance buffer contains a negative value."""
