# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Same contracts as ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"


cdef inline Py_ssize_t _clamp(Py_ssize_t i, Py_ssize_t length) nogil:
    if i < 0:
        return 0
    if i >= length:
        return length - 1
    return i


def moving_average(const double[:, :, ::1] x, Py_ssize_t kernel):
    cdef Py_ssize_t n = x.shape[0], length = x.shape[1], c = x.shape[2]
    cdef Py_ssize_t half = (kernel - 1) // 2
    cdef Py_ssize_t i, t, j, s
    cdef double acc, anchor
    out = np.empty((n, length, c), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(c):
                # running window sum of x - anchor; exact for constant input
                anchor = x[i, 0, j]
                acc = 0.0
                for s in range(-half, half + 1):
                    acc = acc + (x[i, _clamp(s, length), j] - anchor)
                o[i, 0, j] = anchor + acc / kernel
                for t in range(1, length):
                    acc = acc + (x[i, _clamp(t + half, length), j] - anchor)
                    acc = acc - (x[i, _clamp(t - half - 1, length), j] - anchor)
                    o[i, t, j] = anchor + acc / kernel
    return out


def moving_average_grad(const double[:, :, ::1] g, Py_ssize_t kernel):
    cdef Py_ssize_t n = g.shape[0], length = g.shape[1], c = g.shape[2]
    cdef Py_ssize_t half = (kernel - 1) // 2
    cdef Py_ssize_t i, t, j, s
    cdef double acc, edge
    out = np.empty((n, length, c), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for i in range(n):
            for j in range(c):
                # interior: zero-padded centered window sum of g
                acc = 0.0
                for s in range(0, half + 1):
                    if s < length:
                        acc = acc + g[i, s, j]
                o[i, 0, j] = acc
                for t in range(1, length):
                    if t + half < length:
                        acc = acc + g[i, t + half, j]
                    if t - half - 1 >= 0:
                        acc = acc - g[i, t - half - 1, j]
                    o[i, t, j] = acc
                # replicated edges collect the window slots that fell off the ends
                edge = 0.0
                for t in range(0, half):
                    if t < length:
                        edge = edge + (half - t) * g[i, t, j]
                o[i, 0, j] = o[i, 0, j] + edge
                edge = 0.0
                for t in range(length - half, length):
                    if t >= 0:
                        edge = edge + (t + half - length + 1) * g[i, t, j]
                o[i, length - 1, j] = o[i, length - 1, j] + edge
                for t in range(length):
                    o[i, t, j] = o[i, t, j] / kernel
    return out


def delay_aggregate(const double[:, :, ::1] v, const long long[:, ::1] lags,
                    const double[:, ::1] weights):
    cdef Py_ssize_t n = v.shape[0], length = v.shape[1], c = v.shape[2]
    cdef Py_ssize_t k = lags.shape[1]
    cdef Py_ssize_t i, q, t, j, src, shift
    cdef double w
    out = np.zeros((n, length, c), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    with nogil:
        for i in range(n):
            for q in range(k):
                w = weights[i, q]
                shift = lags[i, q] % length
                if shift < 0:
                    shift = shift + length
                for t in range(length):
                    src = t + shift
                    if src >= length:
                        src = src - length
                    for j in range(c):
                        o[i, t, j] += w * v[i, src, j]
    return out


def delay_aggregate_grad(const double[:, :, ::1] g, const double[:, :, ::1] v,
                         const long long[:, ::1] lags, const double[:, ::1] weights):
    cdef Py_ssize_t n = v.shape[0], length = v.shape[1], c = v.shape[2]
    cdef Py_ssize_t k = lags.shape[1]
    cdef Py_ssize_t i, q, t, j, src, shift
    cdef double w, acc
    gv = np.zeros((n, length, c), dtype=np.float64)
    gw = np.zeros((n, k), dtype=np.float64)
    cdef double[:, :, ::1] ov = gv
    cdef double[:, ::1] ow = gw
    with nogil:
        for i in range(n):
            for q in range(k):
                w = weights[i, q]
                shift = lags[i, q] % length
                if shift < 0:
                    shift = shift + length
                acc = 0.0
                for t in range(length):
                    src = t + shift
                    if src >= length:
                        src = src - length
                    for j in range(c):
                        acc = acc + g[i, t, j] * v[i, src, j]
                        ov[i, src, j] += w * g[i, t, j]
                ow[i, q] = acc
    return gv, gw
