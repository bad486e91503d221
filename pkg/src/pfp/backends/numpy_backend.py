"""Pure-numpy kernel set (fallback backend).

Signatures mirror ``numba_backend``.  All kernels take and return float64
C-contiguous arrays; reductions use numpy's fixed internal order, so
results are reproducible run-to-run and independent of thread settings.

Gaussian CDF/PDF values are derived from ``scipy.special.erf``
(relative accuracy around 1 ulp; verified against an arbitrary-precision
reference table in the test suite).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from ..constants import EPS_ACT

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

name = "numpy"


# ---------------------------------------------------------------- dense

def dense_mean(x_mean, w_mean, b_mean):
    return np.einsum("bj,ij->bi", x_mean, w_mean) + b_mean


def dense_var(x_mean, x_srm, w_mean, w_srm, b_var):
    raw = (np.einsum("bj,ij->bi", x_srm, w_srm)
           - np.einsum("bj,ij->bi", x_mean * x_mean, w_mean * w_mean))
    return np.maximum(raw + b_var, 0.0)


def dense_joint(x_mean, x_srm, w_mean, w_srm, b_mean, b_var):
    # Composed from the separate kernels so joint == separate bit-for-bit.
    return (dense_mean(x_mean, w_mean, b_mean),
            dense_var(x_mean, x_srm, w_mean, w_srm, b_var))


def dense_det_joint(x, w_mean, w_var, b_mean, b_var):
    mean = np.einsum("bj,ij->bi", x, w_mean) + b_mean
    var = np.einsum("bj,ij->bi", x * x, w_var) + b_var
    return mean, var


# ---------------------------------------------------------------- conv2d

def _windows(x, kh, kw, stride):
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride, :, :]


def conv2d_joint(x_mean, x_srm, w_mean, w_srm, b_mean, b_var, stride):
    kh, kw = w_mean.shape[2], w_mean.shape[3]
    wm = _windows(x_mean, kh, kw, stride)
    ws = _windows(x_srm, kh, kw, stride)
    mean = np.einsum("bcefrt,ucrt->buef", wm, w_mean)
    raw = (np.einsum("bcefrt,ucrt->buef", ws, w_srm)
           - np.einsum("bcefrt,ucrt->buef", wm * wm, w_mean * w_mean))
    mean = mean + b_mean[None, :, None, None]
    var = np.maximum(raw + b_var[None, :, None, None], 0.0)
    return mean, var


def conv2d_det_joint(x, w_mean, w_var, b_mean, b_var, stride):
    kh, kw = w_mean.shape[2], w_mean.shape[3]
    win = _windows(x, kh, kw, stride)
    mean = np.einsum("bcefrt,ucrt->buef", win, w_mean) + b_mean[None, :, None, None]
    var = np.einsum("bcefrt,ucrt->buef", win * win, w_var) + b_var[None, :, None, None]
    return mean, var


# ------------------------------------------------------------ activations

def relu_mm(mean, var):
    """Gaussian -> rectified-Gaussian moment match, elementwise.

    Returns (mean, second raw moment) of max(0, X) for X ~ N(mean, var).
    Spreads below EPS_ACT use the deterministic limit.
    """
    small = var < EPS_ACT
    v = np.where(small, 1.0, var)
    g = 0.5 * (1.0 + erf(mean / np.sqrt(2.0 * v)))
    pdf = np.sqrt(v / _TWO_PI) * np.exp(-(mean * mean) / (2.0 * v))
    m_out = np.maximum(mean * g + pdf, 0.0)
    s_out = np.maximum((v + mean * mean) * g + mean * pdf, 0.0)
    m_det = np.maximum(mean, 0.0)
    return (np.where(small, m_det, m_out),
            np.where(small, m_det * m_det, s_out))


def _clark_pair(m1, v1, m2, v2):
    # Moment-matched max of two independent Gaussians; degenerate spread
    # (a < EPS_ACT) falls back to the element with the larger mean,
    # first element winning ties.
    a = np.sqrt(v1 + v2)
    deg = a < EPS_ACT
    asafe = np.where(deg, 1.0, a)
    alpha = (m1 - m2) / asafe
    e = erf(alpha * _INV_SQRT2)
    p = 0.5 * (1.0 + e)
    q = 0.5 * (1.0 - e)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * alpha * alpha)
    mean = m1 * p + m2 * q + a * pdf
    e2 = (m1 * m1 + v1) * p + (m2 * m2 + v2) * q + (m1 + m2) * a * pdf
    var = np.maximum(e2 - mean * mean, 0.0)
    take1 = m1 >= m2
    mean = np.where(deg, np.where(take1, m1, m2), mean)
    var = np.where(deg, np.where(take1, v1, v2), var)
    return mean, var


def maxpool2_mm(mean, var):
    """2x2/stride-2 max pool on (B, C, H, W) variance-kind moments.

    Each window reduces by pairwise Gaussian-max matches in fixed order:
    (top-left, top-right), (bottom-left, bottom-right), then the two
    partial results.
    """
    am, av = mean[:, :, 0::2, 0::2], var[:, :, 0::2, 0::2]
    bm, bv = mean[:, :, 0::2, 1::2], var[:, :, 0::2, 1::2]
    cm, cv = mean[:, :, 1::2, 0::2], var[:, :, 1::2, 0::2]
    dm, dv = mean[:, :, 1::2, 1::2], var[:, :, 1::2, 1::2]
    m1, v1 = _clark_pair(am, av, bm, bv)
    m2, v2 = _clark_pair(cm, cv, dm, dv)
    mo, vo = _clark_pair(m1, v1, m2, v2)
    return np.ascontiguousarray(mo), np.ascontiguousarray(vo)


# ----------------------------------------------- deterministic (oracle)

def det_dense_chunk(x, w, b):
    """Per-sample dense forward: (S,B,J) x (S,I,J) + (S,I) -> (S,B,I)."""
    return np.einsum("sbj,sij->sbi", x, w) + b[:, None, :]


def det_conv2d_chunk(x, w, b, stride):
    """Per-sample conv forward: (S,B,C,H,W) x (S,U,C,R,T) -> (S,B,U,E,F)."""
    kh, kw = w.shape[3], w.shape[4]
    win = sliding_window_view(x, (kh, kw), axis=(3, 4))[:, :, :, ::stride, ::stride]
    out = np.einsum("sbcefrt,sucrt->sbuef", win, w)
    return out + b[:, None, :, None, None]
