"""Pure numpy implementations of the hot reductions.

Each function mirrors one in ``_kernels.pyx`` and must return the same
values up to floating-point summation order.
"""

import numpy as np


def logsumexp(a):
    a = np.asarray(a, dtype=np.float64)
    m = a.max()
    if m == -np.inf:
        return -np.inf
    return float(m + np.log(np.exp(a - m).sum()))


def weight_lse(log_w):
    """Return ``(logsumexp(log_w), logsumexp(2 * log_w))``."""
    log_w = np.asarray(log_w, dtype=np.float64)
    m = log_w.max()
    if m == -np.inf:
        return -np.inf, -np.inf
    e = np.exp(log_w - m)
    return float(m + np.log(e.sum())), float(2.0 * m + np.log((e * e).sum()))


def softmax(log_w):
    log_w = np.asarray(log_w, dtype=np.float64)
    m = log_w.max()
    e = np.exp(log_w - m)
    return e / e.sum()


def weighted_sum(w, values):
    return float(np.dot(w, values))


def log_trapz_rows(log_f, log_nodes):
    """Row-wise ``log sum_j exp(log_f[i, j] + log_nodes[j])``."""
    z = np.asarray(log_f, dtype=np.float64) + log_nodes
    m = z.max(axis=1)
    out = np.full(z.shape[0], -np.inf)
    ok = m > -np.inf
    if ok.any():
        zz = z[ok]
        mm = m[ok]
        out[ok] = mm + np.log(np.exp(zz - mm[:, None]).sum(axis=1))
    return out
