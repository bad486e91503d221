"""JIT-compiled kernel set (default backend).

Hot loops carry ``@njit``; batch-style outer loops use ``prange`` so the
worker count set via ``numba.set_num_threads`` bounds parallelism without
affecting results (iterations are independent, reductions run in fixed
ascending index order inside each iteration).

``math.erf`` is the CDF source here (C library erf, about 1 ulp; checked
against an arbitrary-precision table in the tests).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from ..constants import EPS_ACT

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_TWO_PI = 2.0 * math.pi

name = "numba"


@njit(cache=True, parallel=True)
def _dense_joint(xm, xs, wm, ws, bm, bv, out_m, out_v):
    n_batch, n_in = xm.shape
    n_out = wm.shape[0]
    for b in prange(n_batch):
        for i in range(n_out):
            acc_m = 0.0
            acc_v = 0.0
            for j in range(n_in):
                t = wm[i, j] * xm[b, j]
                acc_m += t
                acc_v += ws[i, j] * xs[b, j] - t * t
            v = acc_v + bv[i]
            if v < 0.0:
                v = 0.0
            out_m[b, i] = acc_m + bm[i]
            out_v[b, i] = v


@njit(cache=True, parallel=True)
def _dense_mean(xm, wm, bm, out_m):
    n_batch, n_in = xm.shape
    n_out = wm.shape[0]
    for b in prange(n_batch):
        for i in range(n_out):
            acc_m = 0.0
            for j in range(n_in):
                acc_m += wm[i, j] * xm[b, j]
            out_m[b, i] = acc_m + bm[i]


@njit(cache=True, parallel=True)
def _dense_var(xm, xs, wm, ws, bv, out_v):
    n_batch, n_in = xm.shape
    n_out = wm.shape[0]
    for b in prange(n_batch):
        for i in range(n_out):
            acc_v = 0.0
            for j in range(n_in):
                t = wm[i, j] * xm[b, j]
                acc_v += ws[i, j] * xs[b, j] - t * t
            v = acc_v + bv[i]
            if v < 0.0:
                v = 0.0
            out_v[b, i] = v


@njit(cache=True, parallel=True)
def _dense_det_joint(x, wm, wv, bm, bv, out_m, out_v):
    n_batch, n_in = x.shape
    n_out = wm.shape[0]
    for b in prange(n_batch):
        for i in range(n_out):
            acc_m = 0.0
            acc_v = 0.0
            for j in range(n_in):
                xv = x[b, j]
                acc_m += wm[i, j] * xv
                acc_v += wv[i, j] * xv * xv
            out_m[b, i] = acc_m + bm[i]
            out_v[b, i] = acc_v + bv[i]


@njit(cache=True, parallel=True)
def _conv2d_joint(xm, xs, wm, ws, bm, bv, stride, out_m, out_v):
    n_batch, n_cin, _, _ = xm.shape
    n_cout, _, kh, kw = wm.shape
    n_eh, n_ew = out_m.shape[2], out_m.shape[3]
    for b in prange(n_batch):
        for u in range(n_cout):
            for e in range(n_eh):
                for f in range(n_ew):
                    acc_m = 0.0
                    acc_v = 0.0
                    for c in range(n_cin):
                        for r in range(kh):
                            for t in range(kw):
                                mw = wm[u, c, r, t]
                                mx = xm[b, c, e * stride + r, f * stride + t]
                                tt = mw * mx
                                acc_m += tt
                                acc_v += (ws[u, c, r, t]
                                          * xs[b, c, e * stride + r, f * stride + t]
                                          - tt * tt)
                    v = acc_v + bv[u]
                    if v < 0.0:
                        v = 0.0
                    out_m[b, u, e, f] = acc_m + bm[u]
                    out_v[b, u, e, f] = v


@njit(cache=True, parallel=True)
def _conv2d_det_joint(x, wm, wv, bm, bv, stride, out_m, out_v):
    n_batch, n_cin, _, _ = x.shape
    n_cout, _, kh, kw = wm.shape
    n_eh, n_ew = out_m.shape[2], out_m.shape[3]
    for b in prange(n_batch):
        for u in range(n_cout):
            for e in range(n_eh):
                for f in range(n_ew):
                    acc_m = 0.0
                    acc_v = 0.0
                    for c in range(n_cin):
                        for r in range(kh):
                            for t in range(kw):
                                xv = x[b, c, e * stride + r, f * stride + t]
                                acc_m += wm[u, c, r, t] * xv
                                acc_v += wv[u, c, r, t] * xv * xv
                    out_m[b, u, e, f] = acc_m + bm[u]
                    out_v[b, u, e, f] = acc_v + bv[u]


@njit(cache=True, parallel=True)
def _relu_mm(mean, var, out_m, out_s):
    n = mean.shape[0]
    for k in prange(n):
        m = mean[k]
        v = var[k]
        if v < EPS_ACT:
            md = m if m > 0.0 else 0.0
            out_m[k] = md
            out_s[k] = md * md
        else:
            g = 0.5 * (1.0 + math.erf(m / math.sqrt(2.0 * v)))
            pdf = math.sqrt(v / _TWO_PI) * math.exp(-(m * m) / (2.0 * v))
            mo = m * g + pdf
            if mo < 0.0:
                mo = 0.0
            so = (v + m * m) * g + m * pdf
            if so < 0.0:
                so = 0.0
            out_m[k] = mo
            out_s[k] = so


@njit(cache=True)
def _clark(m1, v1, m2, v2):
    a = math.sqrt(v1 + v2)
    if a < EPS_ACT:
        if m1 >= m2:
            return m1, v1
        return m2, v2
    alpha = (m1 - m2) / a
    e = math.erf(alpha * _INV_SQRT2)
    p = 0.5 * (1.0 + e)
    q = 0.5 * (1.0 - e)
    pdf = _INV_SQRT_2PI * math.exp(-0.5 * alpha * alpha)
    mean = m1 * p + m2 * q + a * pdf
    e2 = (m1 * m1 + v1) * p + (m2 * m2 + v2) * q + (m1 + m2) * a * pdf
    var = e2 - mean * mean
    if var < 0.0:
        var = 0.0
    return mean, var


@njit(cache=True, parallel=True)
def _maxpool2_mm(mean, var, out_m, out_v):
    n_batch, n_ch = mean.shape[0], mean.shape[1]
    n_eh, n_ew = out_m.shape[2], out_m.shape[3]
    for b in prange(n_batch):
        for c in range(n_ch):
            for e in range(n_eh):
                for f in range(n_ew):
                    i, j = 2 * e, 2 * f
                    m1, v1 = _clark(mean[b, c, i, j], var[b, c, i, j],
                                    mean[b, c, i, j + 1], var[b, c, i, j + 1])
                    m2, v2 = _clark(mean[b, c, i + 1, j], var[b, c, i + 1, j],
                                    mean[b, c, i + 1, j + 1], var[b, c, i + 1, j + 1])
                    mo, vo = _clark(m1, v1, m2, v2)
                    out_m[b, c, e, f] = mo
                    out_v[b, c, e, f] = vo


@njit(cache=True, parallel=True)
def _det_dense_chunk(x, w, b, out):
    n_s, n_batch, n_in = x.shape
    n_out = w.shape[1]
    for s in prange(n_s):
        for bb in range(n_batch):
            for i in range(n_out):
                acc = 0.0
                for j in range(n_in):
                    acc += w[s, i, j] * x[s, bb, j]
                out[s, bb, i] = acc + b[s, i]


@njit(cache=True, parallel=True)
def _det_conv2d_chunk(x, w, b, stride, out):
    n_s, n_batch, n_cin = x.shape[0], x.shape[1], x.shape[2]
    n_cout, kh, kw = w.shape[1], w.shape[3], w.shape[4]
    n_eh, n_ew = out.shape[3], out.shape[4]
    for s in prange(n_s):
        for bb in range(n_batch):
            for u in range(n_cout):
                for e in range(n_eh):
                    for f in range(n_ew):
                        acc = 0.0
                        for c in range(n_cin):
                            for r in range(kh):
                                for t in range(kw):
                                    acc += (w[s, u, c, r, t]
                                            * x[s, bb, c, e * stride + r, f * stride + t])
                        out[s, bb, u, e, f] = acc + b[s, u]


# Wrappers allocating outputs; signatures match numpy_backend.

def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def dense_joint(x_mean, x_srm, w_mean, w_srm, b_mean, b_var):
    out_m = np.empty((x_mean.shape[0], w_mean.shape[0]))
    out_v = np.empty_like(out_m)
    _dense_joint(_c(x_mean), _c(x_srm), _c(w_mean), _c(w_srm), _c(b_mean), _c(b_var),
                 out_m, out_v)
    return out_m, out_v


def dense_mean(x_mean, w_mean, b_mean):
    out_m = np.empty((x_mean.shape[0], w_mean.shape[0]))
    _dense_mean(_c(x_mean), _c(w_mean), _c(b_mean), out_m)
    return out_m


def dense_var(x_mean, x_srm, w_mean, w_srm, b_var):
    out_v = np.empty((x_mean.shape[0], w_mean.shape[0]))
    _dense_var(_c(x_mean), _c(x_srm), _c(w_mean), _c(w_srm), _c(b_var), out_v)
    return out_v


def dense_det_joint(x, w_mean, w_var, b_mean, b_var):
    out_m = np.empty((x.shape[0], w_mean.shape[0]))
    out_v = np.empty_like(out_m)
    _dense_det_joint(_c(x), _c(w_mean), _c(w_var), _c(b_mean), _c(b_var), out_m, out_v)
    return out_m, out_v


def _conv_out_shape(x, w, stride):
    eh = (x.shape[2] - w.shape[2]) // stride + 1
    ew = (x.shape[3] - w.shape[3]) // stride + 1
    return (x.shape[0], w.shape[0], eh, ew)


def conv2d_joint(x_mean, x_srm, w_mean, w_srm, b_mean, b_var, stride):
    out_m = np.empty(_conv_out_shape(x_mean, w_mean, stride))
    out_v = np.empty_like(out_m)
    _conv2d_joint(_c(x_mean), _c(x_srm), _c(w_mean), _c(w_srm), _c(b_mean), _c(b_var),
                  stride, out_m, out_v)
    return out_m, out_v


def conv2d_det_joint(x, w_mean, w_var, b_mean, b_var, stride):
    out_m = np.empty(_conv_out_shape(x, w_mean, stride))
    out_v = np.empty_like(out_m)
    _conv2d_det_joint(_c(x), _c(w_mean), _c(w_var), _c(b_mean), _c(b_var),
                      stride, out_m, out_v)
    return out_m, out_v


def relu_mm(mean, var):
    shape = mean.shape
    flat_m = _c(mean).reshape(-1)
    flat_v = _c(var).reshape(-1)
    out_m = np.empty_like(flat_m)
    out_s = np.empty_like(flat_m)
    _relu_mm(flat_m, flat_v, out_m, out_s)
    return out_m.reshape(shape), out_s.reshape(shape)


def maxpool2_mm(mean, var):
    b, c, h, w = mean.shape
    out_m = np.empty((b, c, h // 2, w // 2))
    out_v = np.empty_like(out_m)
    _maxpool2_mm(_c(mean), _c(var), out_m, out_v)
    return out_m, out_v


def det_dense_chunk(x, w, b):
    out = np.empty((x.shape[0], x.shape[1], w.shape[1]))
    _det_dense_chunk(_c(x), _c(w), _c(b), out)
    return out


def det_conv2d_chunk(x, w, b, stride):
    eh = (x.shape[3] - w.shape[3]) // stride + 1
    ew = (x.shape[4] - w.shape[4]) // stride + 1
    out = np.empty((x.shape[0], x.shape[1], w.shape[1], eh, ew))
    _det_conv2d_chunk(_c(x), _c(w), _c(b), stride, out)
    return out
