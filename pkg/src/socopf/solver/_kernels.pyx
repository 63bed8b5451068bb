# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled second-order cone kernels; same contract as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef inline double _dot(const double[::1] a, const double[::1] b, idx_t o1, idx_t o2, idx_t n) nogil:
    cdef double acc = 0.0
    cdef idx_t k
    for k in range(n):
        acc += a[o1 + k] * b[o2 + k]
    return acc


cdef inline double _det(const double[::1] u, idx_t o, idx_t d) nogil:
    # factored form avoids cancellation near the cone boundary
    cdef double nrm = sqrt(_dot(u, u, o + 1, o + 1, d - 1))
    return (u[o] - nrm) * (u[o] + nrm)


def nt_scaling(const double[::1] s, const double[::1] z, const idx_t[::1] offsets, const idx_t[::1] dims):
    cdef idx_t nc = dims.shape[0]
    cdef cnp.ndarray[double, ndim=1] eta_a = np.empty(nc)
    cdef cnp.ndarray[double, ndim=1] w_a = np.zeros(s.shape[0])
    cdef cnp.ndarray[double, ndim=1] lam_a = np.zeros(s.shape[0])
    cdef double[::1] eta = eta_a
    cdef double[::1] w = w_a
    cdef double[::1] lam = lam_a
    cdef idx_t c, o, d, k
    cdef double sd, zd, gamma, e, w0, dot, v0, sz
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            sd = sqrt(_det(s, o, d))
            zd = sqrt(_det(z, o, d))
            sz = 0.0
            for k in range(d):
                sz += (s[o + k] / sd) * (z[o + k] / zd)
            gamma = sqrt(0.5 * (1.0 + sz))
            w[o] = (s[o] / sd + z[o] / zd) / (2.0 * gamma)
            for k in range(1, d):
                w[o + k] = (s[o + k] / sd - z[o + k] / zd) / (2.0 * gamma)
            e = sqrt(sd / zd)
            eta[c] = e
            w0 = w[o]
            v0 = z[o]
            dot = _dot(w, z, o + 1, o + 1, d - 1)
            lam[o] = e * (w0 * v0 + dot)
            for k in range(1, d):
                lam[o + k] = e * (z[o + k] + (v0 + dot / (1.0 + w0)) * w[o + k])
    return eta_a, w_a, lam_a


def apply_scaling(const double[::1] v, const double[::1] eta, const double[::1] w,
                  const idx_t[::1] offsets, const idx_t[::1] dims, bint inverse=False):
    cdef cnp.ndarray[double, ndim=1] out_a = np.array(v, copy=True)
    cdef double[::1] out = out_a
    cdef idx_t nc = dims.shape[0]
    cdef idx_t c, o, d, k
    cdef double w0, v0, dot, e, coef
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            e = eta[c]
            w0 = w[o]
            v0 = v[o]
            dot = _dot(w, v, o + 1, o + 1, d - 1)
            if inverse:
                out[o] = (w0 * v0 - dot) / e
                coef = -v0 + dot / (1.0 + w0)
                for k in range(1, d):
                    out[o + k] = (v[o + k] + coef * w[o + k]) / e
            else:
                out[o] = e * (w0 * v0 + dot)
                coef = v0 + dot / (1.0 + w0)
                for k in range(1, d):
                    out[o + k] = e * (v[o + k] + coef * w[o + k])
    return out_a


def jordan_product(const double[::1] u, const double[::1] v, const idx_t[::1] offsets, const idx_t[::1] dims):
    cdef cnp.ndarray[double, ndim=1] out_a = np.zeros(u.shape[0])
    cdef double[::1] out = out_a
    cdef idx_t nc = dims.shape[0]
    cdef idx_t c, o, d, k
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            out[o] = _dot(u, v, o, o, d)
            for k in range(1, d):
                out[o + k] = u[o] * v[o + k] + v[o] * u[o + k]
    return out_a


def jordan_divide(const double[::1] lam, const double[::1] dv, const idx_t[::1] offsets, const idx_t[::1] dims):
    cdef cnp.ndarray[double, ndim=1] out_a = np.zeros(dv.shape[0])
    cdef double[::1] out = out_a
    cdef idx_t nc = dims.shape[0]
    cdef idx_t c, o, d, k
    cdef double det, x0
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            det = _det(lam, o, d)
            x0 = (lam[o] * dv[o] - _dot(lam, dv, o + 1, o + 1, d - 1)) / det
            out[o] = x0
            for k in range(1, d):
                out[o + k] = (dv[o + k] - x0 * lam[o + k]) / lam[o]
    return out_a


def max_step(const double[::1] u, const double[::1] dv, const idx_t[::1] offsets, const idx_t[::1] dims):
    cdef idx_t nc = dims.shape[0]
    cdef idx_t c, o, d
    cdef double a, b, cc, disc, sq, q, r, r1, r2
    cdef double best = INFINITY
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            a = _det(dv, o, d)
            b = u[o] * dv[o] - _dot(u, dv, o + 1, o + 1, d - 1)
            cc = _det(u, o, d)
            if cc < 0.0:
                cc = 0.0
            disc = b * b - a * cc
            if disc < 0.0 or (a > 0.0 and b > 0.0):
                continue
            sq = sqrt(disc)
            q = -(b + sq) if b >= 0.0 else -(b - sq)
            r1 = q / a if a != 0.0 else INFINITY
            r2 = cc / q if q != 0.0 else INFINITY
            r = INFINITY
            if r1 > 0.0 and r1 < r:
                r = r1
            if r2 > 0.0 and r2 < r:
                r = r2
            if r < best:
                best = r
    return best


def scaling_squared(const double[::1] eta, const double[::1] w, const idx_t[::1] offsets, const idx_t[::1] dims):
    cdef idx_t nc = dims.shape[0]
    cdef idx_t total = 0
    cdef idx_t c
    for c in range(nc):
        total += dims[c] * dims[c]
    cdef cnp.ndarray[double, ndim=1] out_a = np.empty(total)
    cdef double[::1] out = out_a
    cdef idx_t o, d, i, j, pos = 0
    cdef double e2, v
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            e2 = eta[c] * eta[c]
            for i in range(d):
                for j in range(d):
                    v = 2.0 * w[o + i] * w[o + j]
                    if i == j:
                        v += -1.0 if i == 0 else 1.0
                    out[pos] = e2 * v
                    pos += 1
    return out_a


def margins(const double[::1] u, const idx_t[::1] offsets, const idx_t[::1] dims):
    cdef idx_t nc = dims.shape[0]
    cdef cnp.ndarray[double, ndim=1] out_a = np.empty(nc)
    cdef double[::1] out = out_a
    cdef idx_t c, o, d
    with nogil:
        for c in range(nc):
            o = offsets[c]
            d = dims[c]
            out[c] = u[o] - sqrt(_dot(u, u, o + 1, o + 1, d - 1))
    return out_a
