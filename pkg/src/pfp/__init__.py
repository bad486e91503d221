"""Closed-form Bayesian neural network inference.

Networks with Gaussian weight posteriors are executed in a single pass
that propagates per-element means and variances through every layer,
replacing repeated weight sampling.  The package also ships the sampling
oracle it is validated against, a full uncertainty-metric stack, and
bit-exact model/tensor container formats.
"""

from .errors import (BadMagic, ConventionMismatch, CorruptMoments, FormatError,
                     InsufficientSamples, ManifestError, NegativeVariance,
                     PfpError, ShapeError, UnsupportedVersion, WrongSpreadKind)
from .layers import (BiasConfig, Conv2d, Dense, Flatten, GaussianWeights,
                     MaxPool2x2, ModelGraph, ReLU, apply_calibration)
from .mc import (SampleSet, empirical_moments, mc_predict, normal_stream,
                 sample_deterministic_model, scalar_mc_moments)
from .metrics import (McMode, MetricsReport, PfpMode, ProbSampleSet, auroc,
                      ece, evaluate, logit_sample, mutual_information, nll,
                      shannon_entropy, sme, softmax)
from .formats import load_model, load_tensor, save_model, save_tensor
from .ops import (conv2d_pfp, conv2d_pfp_det_input, dense_pfp,
                  dense_pfp_det_input, flatten, forward, maxpool2_pfp,
                  relu_moment_match)
from .tensors import (DeterministicTensor, GaussianTensor, LogitDistribution,
                      SpreadKind, convert_spread, validate)

__version__ = "0.1.0"
