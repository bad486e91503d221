"""Classification uncertainty, calibration, and separation metrics.

All entropies are in nats.  The sample-based stack works on a
:class:`ProbSampleSet` (per-sample softmax probabilities); single-pass
logit distributions enter it through :func:`logit_sample`, which draws
synthetic logit realizations from the per-class Gaussians instead of
re-running the network.

Per item, the decomposition identity holds before the final clamp:

    mutual_information + sme == entropy(mean probs)

where sme (the mean over samples of each sample's entropy) captures the
aleatoric part and mutual information the epistemic part.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InsufficientSamples, PfpError, ShapeError
from .layers import ModelGraph
from .mc import mc_predict, normal_stream
from .ops import forward
from .tensors import DeterministicTensor, LogitDistribution

_MI_FLOOR = 1e-12  # rounding floor when clamping mutual information at zero
_PROB_FLOOR = 1e-300  # keeps log() finite in the likelihood


@dataclass(frozen=True)
class ProbSampleSet:
    """Per-sample probability rows: (n_samples, batch, classes)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if probs.ndim != 3:
            raise ShapeError(f"prob samples must be rank 3, got {probs.shape}")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def n_samples(self) -> int:
        return self.probs.shape[0]

    def mean_probs(self) -> np.ndarray:
        return self.probs.mean(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-shifted exponential normalization along the last axis."""
    logits = np.asarray(logits, dtype=np.float64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def logit_sample(d: LogitDistribution, n: int, seed: int) -> ProbSampleSet:
    """Draw n synthetic logit realizations per item and softmax each.

    Classes are sampled independently (the pass emits no covariance).
    Deterministic given the seed.
    """
    if n < 1:
        raise InsufficientSamples("logit sampling needs n >= 1")
    z = normal_stream(seed, 0, n * d.batch * d.classes).reshape(n, d.batch, d.classes)
    logits = d.logit_mean[None] + np.sqrt(d.logit_var)[None] * z
    return ProbSampleSet(softmax(logits))


def shannon_entropy(probs: np.ndarray) -> np.ndarray:
    """-sum p ln p along the last axis, with 0 ln 0 = 0."""
    p = np.asarray(probs, dtype=np.float64)
    terms = np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0)
    return -terms.sum(axis=-1)


def sme(s: ProbSampleSet) -> np.ndarray:
    """Per-item mean over samples of each sample's entropy (aleatoric)."""
    return shannon_entropy(s.probs).mean(axis=0)


def mutual_information(s: ProbSampleSet) -> np.ndarray:
    """Per-item entropy of the mean row minus sme (epistemic), clamped at 0."""
    raw = shannon_entropy(s.mean_probs()) - sme(s)
    return np.maximum(raw, 0.0)


def nll(mean_probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log probability assigned to the true class."""
    mean_probs = np.asarray(mean_probs, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= mean_probs.shape[-1]:
        raise ShapeError(
            f"label out of range [0, {mean_probs.shape[-1]}): {labels.min()}..{labels.max()}")
    p_true = mean_probs[np.arange(mean_probs.shape[0]), labels]
    return float(-np.log(np.maximum(p_true, _PROB_FLOOR)).mean())


def ece(mean_probs: np.ndarray, labels: np.ndarray, bins: int = 10) -> float:
    """Expected calibration error over equal-width confidence bins.

    Bin m covers ((m-1)/M, m/M]; zero confidence lands in bin 1.
    """
    if bins < 1:
        raise PfpError("ece needs bins >= 1")
    mean_probs = np.asarray(mean_probs, dtype=np.float64)
    labels = np.asarray(labels)
    conf = mean_probs.max(axis=-1)
    pred = mean_probs.argmax(axis=-1)
    correct = (pred == labels).astype(np.float64)
    idx = np.ceil(conf * bins).astype(np.int64)
    idx = np.clip(idx, 1, bins)
    n = conf.shape[0]
    total = 0.0
    for m in range(1, bins + 1):
        mask = idx == m
        count = int(mask.sum())
        if count == 0:
            continue
        acc = correct[mask].mean()
        avg_conf = conf[mask].mean()
        total += (count / n) * abs(acc - avg_conf)
    return float(total)


def auroc(scores_id, scores_ood) -> float:
    """Probability a random out-of-distribution score exceeds a random
    in-distribution score, ties counting one half.

    Computed from exact pair counts so that auroc(a, b) + auroc(b, a) == 1
    holds exactly.
    """
    a = np.sort(np.asarray(scores_id, dtype=np.float64))
    b = np.asarray(scores_ood, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise PfpError("auroc needs non-empty score lists")
    lo = np.searchsorted(a, b, side="left")
    hi = np.searchsorted(a, b, side="right")
    wins2 = 2 * int(lo.sum()) + int((hi - lo).sum())  # doubled wins + ties
    d = 2 * a.size * b.size
    if 2 * wins2 == d:
        return 0.5
    if 2 * wins2 < d:
        return wins2 / d
    return 1.0 - (d - wins2) / d


@dataclass(frozen=True)
class PfpMode:
    """Single-pass inference; metrics via logit sampling."""

    n_logit_samples: int


@dataclass(frozen=True)
class McMode:
    """Weight-sampling inference with n full forward passes."""

    n_samples: int


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    mean_entropy: float
    mean_sme: float
    mean_mi: float
    nll: float
    ece: float
    n_items: int
    auroc: Optional[float] = None
    ood_mean_entropy: Optional[float] = None
    ood_mean_sme: Optional[float] = None
    ood_mean_mi: Optional[float] = None
    n_ood: Optional[int] = None

    def kv_lines(self) -> list[str]:
        """Flat key/value serialization, one metric per line."""
        lines = [
            f"accuracy={self.accuracy!r}",
            f"mean_entropy={self.mean_entropy!r}",
            f"mean_sme={self.mean_sme!r}",
            f"mean_mi={self.mean_mi!r}",
            f"nll={self.nll!r}",
            f"ece={self.ece!r}",
            f"n_items={self.n_items}",
        ]
        if self.auroc is not None:
            lines += [
                f"ood_mean_entropy={self.ood_mean_entropy!r}",
                f"ood_mean_sme={self.ood_mean_sme!r}",
                f"ood_mean_mi={self.ood_mean_mi!r}",
                f"n_ood={self.n_ood}",
                f"auroc={self.auroc!r}",
            ]
        return lines

    def csv_lines(self) -> list[str]:
        """CSV form, one row per split."""
        header = "split,n_items,accuracy,mean_entropy,mean_sme,mean_mi,nll,ece,auroc"
        auroc_cell = "" if self.auroc is None else repr(self.auroc)
        rows = [header,
                f"id,{self.n_items},{self.accuracy!r},{self.mean_entropy!r},"
                f"{self.mean_sme!r},{self.mean_mi!r},{self.nll!r},{self.ece!r},{auroc_cell}"]
        if self.auroc is not None:
            rows.append(
                f"ood,{self.n_ood},,{self.ood_mean_entropy!r},"
                f"{self.ood_mean_sme!r},{self.ood_mean_mi!r},,,")
        return rows


def _prob_samples(model: ModelGraph, inputs: DeterministicTensor,
                  mode, seed: int) -> ProbSampleSet:
    if isinstance(mode, PfpMode):
        if mode.n_logit_samples < 2:
            raise InsufficientSamples(
                "mutual information needs at least 2 logit samples")
        dist = forward(model, inputs)
        return logit_sample(dist, mode.n_logit_samples, seed)
    if isinstance(mode, McMode):
        if mode.n_samples < 2:
            raise InsufficientSamples("mc evaluation needs at least 2 samples")
        sample_set = mc_predict(model, inputs, mode.n_samples, seed)
        return ProbSampleSet(softmax(sample_set.logits))
    raise PfpError(f"unknown evaluation mode {mode!r}")


def evaluate(model: ModelGraph, inputs: DeterministicTensor, labels: np.ndarray,
             mode, seed: int = 42, ood_inputs: Optional[DeterministicTensor] = None,
             ece_bins: int = 10, ood_score: str = "mi") -> MetricsReport:
    """Full metric stack over a labeled set, optionally with an OOD split.

    The OOD separation score is per-item mutual information by default
    ('mi'), or total predictive entropy ('entropy').  The OOD split reuses
    the pipeline with stream seed+1 so the two splits draw independent
    noise; everything is deterministic given the seed.
    """
    labels = np.asarray(labels)
    if labels.shape != (inputs.shape[0],):
        raise ShapeError(
            f"labels shape {labels.shape} does not match batch {inputs.shape[0]}")
    if ood_score not in ("mi", "entropy"):
        raise PfpError(f"unknown ood score {ood_score!r}")
    samples = _prob_samples(model, inputs, mode, seed)
    mean_probs = samples.mean_probs()
    entropy_items = shannon_entropy(mean_probs)
    sme_items = sme(samples)
    mi_items = mutual_information(samples)
    pred = mean_probs.argmax(axis=-1)
    if labels.min() < 0 or labels.max() >= mean_probs.shape[-1]:
        raise ShapeError(
            f"label out of range [0, {mean_probs.shape[-1]}): {labels.min()}..{labels.max()}")
    report = dict(
        accuracy=float((pred == labels).mean()),
        mean_entropy=float(entropy_items.mean()),
        mean_sme=float(sme_items.mean()),
        mean_mi=float(mi_items.mean()),
        nll=nll(mean_probs, labels),
        ece=ece(mean_probs, labels, ece_bins),
        n_items=int(inputs.shape[0]),
    )
    if ood_inputs is not None:
        ood_samples = _prob_samples(model, ood_inputs, mode, seed + 1)
        ood_entropy = shannon_entropy(ood_samples.mean_probs())
        ood_sme = sme(ood_samples)
        ood_mi = mutual_information(ood_samples)
        id_scores = mi_items if ood_score == "mi" else entropy_items
        ood_scores = ood_mi if ood_score == "mi" else ood_entropy
        report.update(
            auroc=auroc(id_scores, ood_scores),
            ood_mean_entropy=float(ood_entropy.mean()),
            ood_mean_sme=float(ood_sme.mean()),
            ood_mean_mi=float(ood_mi.mean()),
            n_ood=int(ood_inputs.shape[0]),
        )
    return MetricsReport(**report)
