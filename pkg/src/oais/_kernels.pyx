# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the reductions in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def logsumexp(a):
    cdef const double[::1] v = np.ascontiguousarray(a, dtype=np.float64)
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double m = -INFINITY, s = 0.0
    for i in range(n):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        s += exp(v[i] - m)
    return m + log(s)


def weight_lse(log_w):
    cdef const double[::1] v = np.ascontiguousarray(log_w, dtype=np.float64)
    cdef Py_ssize_t i, n = v.shape[0]
    cdef double m = -INFINITY, s1 = 0.0, s2 = 0.0, e
    for i in range(n):
        if v[i] > m:
            m = v[i]
    if m == -INFINITY:
        return -INFINITY, -INFINITY
    for i in range(n):
        e = exp(v[i] - m)
        s1 += e
        s2 += e * e
    return m + log(s1), 2.0 * m + log(s2)


def softmax(log_w):
    cdef const double[::1] v = np.ascontiguousarray(log_w, dtype=np.float64)
    cdef Py_ssize_t i, n = v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double m = -INFINITY, s = 0.0
    for i in range(n):
        if v[i] > m:
            m = v[i]
    for i in range(n):
        o[i] = exp(v[i] - m)
        s += o[i]
    for i in range(n):
        o[i] /= s
    return out


def weighted_sum(w, values):
    cdef const double[::1] a = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double s = 0.0
    for i in range(n):
        s += a[i] * b[i]
    return s


def log_trapz_rows(log_f, log_nodes):
    cdef const double[:, ::1] f = np.ascontiguousarray(log_f, dtype=np.float64)
    cdef const double[::1] w = np.ascontiguousarray(log_nodes, dtype=np.float64)
    cdef Py_ssize_t i, j, rows = f.shape[0], cols = f.shape[1]
    out = np.empty(rows, dtype=np.float64)
    cdef double[::1] o = out
    cdef double m, s, z
    for i in range(rows):
        m = -INFINITY
        for j in range(cols):
            z = f[i, j] + w[j]
            if z > m:
                m = z
        if m == -INFINITY:
            o[i] = -INFINITY
            continue
        s = 0.0
        for j in range(cols):
            s += exp(f[i, j] + w[j] - m)
        o[i] = m + log(s)
    return out
