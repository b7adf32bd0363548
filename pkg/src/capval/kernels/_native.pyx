# cython: language_level=3
"""Compiled implementations of the hot numeric kernels.

Mirrors capval.kernels._numpy exactly (formulas and exponent clamp); the
dispatcher in capval.kernels prefers this module when it built.
"""

import numpy as np

from libc.math cimport exp

BACKEND = "native"

cdef double EXP_CLAMP = 700.0


cdef inline double _clamp(double z) nogil:
    if z > EXP_CLAMP:
        return EXP_CLAMP
    if z < -EXP_CLAMP:
        return -EXP_CLAMP
    return z


def sigmoid_eval(losses, double alpha, double beta, double gamma):
    """Bounded decreasing sigmoid gamma + (1-gamma)/(1+exp(alpha*(L-beta)))."""
    cdef double[::1] L = np.ascontiguousarray(losses, dtype=np.float64)
    cdef Py_ssize_t n = L.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double z
    with nogil:
        for i in range(n):
            z = _clamp(alpha * (L[i] - beta))
            out[i] = gamma + (1.0 - gamma) / (1.0 + exp(z))
    return out_arr


def sigmoid_mse_grad(losses, caps, double alpha, double beta, double gamma):
    """(mse, d_mse/d_alpha, d_mse/d_beta) of the sigmoid-law MSE objective."""
    cdef double[::1] L = np.ascontiguousarray(losses, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(caps, dtype=np.float64)
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t i
    cdef double z, s, r, w
    cdef double mse = 0.0, sa = 0.0, sb = 0.0
    with nogil:
        for i in range(n):
            z = _clamp(alpha * (L[i] - beta))
            s = 1.0 / (1.0 + exp(z))
            r = c[i] - (gamma + (1.0 - gamma) * s)
            mse += r * r
            w = r * s * (1.0 - s)
            sa += w * (L[i] - beta)
            sb += w
    cdef double g = 2.0 * (1.0 - gamma) / n
    return mse / n, g * sa, g * sb * -alpha


def sigmoid_mse_grid(losses, caps, alpha_grid, beta_grid, double gamma):
    """MSE of the sigmoid law over an (alpha, beta) parameter grid.

    Fast path factors exp(a*(L-b)) = exp(a*L) * exp(-a*b) so each grid row
    needs n+nb exponentials instead of n*nb; rows where either factor could
    overflow (|a*L| or |a*b| > 350) fall back to clamped per-cell exp.
    """
    cdef double[::1] L = np.ascontiguousarray(losses, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(caps, dtype=np.float64)
    cdef double[::1] A = np.ascontiguousarray(alpha_grid, dtype=np.float64)
    cdef double[::1] B = np.ascontiguousarray(beta_grid, dtype=np.float64)
    cdef Py_ssize_t n = L.shape[0], na = A.shape[0], nb = B.shape[0]
    out_arr = np.empty((na, nb), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] u = np.empty(n, dtype=np.float64)
    cdef double[::1] v = np.empty(nb, dtype=np.float64)
    cdef Py_ssize_t i, j, k
    cdef double z, r, acc, a, bb, vj, one_minus = 1.0 - gamma
    cdef bint fast
    with nogil:
        for i in range(na):
            a = A[i]
            fast = True
            for k in range(n):
                z = a * L[k]
                if z > 350.0 or z < -350.0:
                    fast = False
                    break
            if fast:
                for j in range(nb):
                    z = a * B[j]
                    if z > 350.0 or z < -350.0:
                        fast = False
                        break
            if fast:
                for k in range(n):
                    u[k] = exp(a * L[k])
                for j in range(nb):
                    v[j] = exp(-a * B[j])
                for j in range(nb):
                    vj = v[j]
                    acc = 0.0
                    for k in range(n):
                        r = c[k] - (gamma + one_minus / (1.0 + u[k] * vj))
                        acc += r * r
                    out[i, j] = acc / n
            else:
                for j in range(nb):
                    bb = B[j]
                    acc = 0.0
                    for k in range(n):
                        z = _clamp(a * (L[k] - bb))
                        r = c[k] - (gamma + one_minus / (1.0 + exp(z)))
                        acc += r * r
                    out[i, j] = acc / n
    return out_arr


def bm25_scores(doc_ids, tfs, offsets, idfs, doc_lens, double avgdl,
                double k1, double b, Py_ssize_t n_docs):
    """Accumulate BM25 scores over concatenated posting lists of one query."""
    cdef int[::1] ids = np.ascontiguousarray(doc_ids, dtype=np.int32)
    cdef double[::1] f = np.ascontiguousarray(tfs, dtype=np.float64)
    cdef long long[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef double[::1] w = np.ascontiguousarray(idfs, dtype=np.float64)
    cdef double[::1] dl = np.ascontiguousarray(doc_lens, dtype=np.float64)
    scores_arr = np.zeros(n_docs, dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef Py_ssize_t t, j
    cdef int d
    cdef double tf, denom
    cdef Py_ssize_t n_terms = w.shape[0]
    with nogil:
        for t in range(n_terms):
            for j in range(off[t], off[t + 1]):
                d = ids[j]
                tf = f[j]
                denom = tf + k1 * (1.0 - b + b * dl[d] / avgdl)
                scores[d] += w[t] * tf * (k1 + 1.0) / denom
    return scores_arr
