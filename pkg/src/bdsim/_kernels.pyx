# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-sample aggregation kernels.

Same contracts as ``bdsim._kernels_py``; the loops run without the GIL.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def geometric_median(points, double tol=1e-9, int max_iter=500, double eps=1e-12):
    cdef double[:, :, ::1] Y = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t S = Y.shape[0], N = Y.shape[1], c = Y.shape[2]
    out = np.empty((S, c), dtype=np.float64)
    conv = np.zeros(S, dtype=np.uint8)
    its = np.zeros(S, dtype=np.int64)
    cdef double[:, ::1] y = out
    cdef unsigned char[::1] converged = conv
    cdef long long[::1] iters = its
    cdef double[::1] y_new = np.empty(c, dtype=np.float64)
    cdef Py_ssize_t s, i, k, it
    cdef double d, w, wsum, step, diff

    with nogil:
        for s in range(S):
            for k in range(c):
                y[s, k] = 0.0
            for i in range(N):
                for k in range(c):
                    y[s, k] += Y[s, i, k]
            for k in range(c):
                y[s, k] /= N
            for it in range(max_iter):
                for k in range(c):
                    y_new[k] = 0.0
                wsum = 0.0
                for i in range(N):
                    d = 0.0
                    for k in range(c):
                        diff = Y[s, i, k] - y[s, k]
                        d += diff * diff
                    d = sqrt(d)
                    w = 1.0 / (d if d > eps else eps)
                    wsum += w
                    for k in range(c):
                        y_new[k] += w * Y[s, i, k]
                step = 0.0
                for k in range(c):
                    y_new[k] /= wsum
                    diff = y_new[k] - y[s, k]
                    step += diff * diff
                    y[s, k] = y_new[k]
                iters[s] = it + 1
                if sqrt(step) < tol:
                    converged[s] = 1
                    break
    return out, conv.astype(bool), its


def filter_stats(points, mask=None, double tol=1e-10, int max_iter=1000):
    cdef double[:, :, ::1] Y = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t S = Y.shape[0], N = Y.shape[1], c = Y.shape[2]
    m_arr = np.ones((S, N), dtype=np.uint8) if mask is None else np.ascontiguousarray(mask, dtype=np.uint8)
    cdef unsigned char[:, ::1] m = m_arr
    mu_arr = np.zeros((S, c), dtype=np.float64)
    v_arr = np.zeros((S, c), dtype=np.float64)
    s_arr = np.zeros((S, N), dtype=np.float64)
    deg_arr = np.zeros(S, dtype=np.uint8)
    cdef double[:, ::1] mu = mu_arr
    cdef double[:, ::1] v = v_arr
    cdef double[:, ::1] proj = s_arr
    cdef unsigned char[::1] degenerate = deg_arr
    cdef double[:, ::1] D = np.empty((N, c), dtype=np.float64)
    cdef double[:, ::1] cov = np.empty((c, c), dtype=np.float64)
    cdef double[::1] u = np.empty(c, dtype=np.float64)
    cdef Py_ssize_t s, i, j, k, it, start
    cdef double n, acc, best, nrm, step, diff

    with nogil:
        for s in range(S):
            n = 0.0
            for k in range(c):
                mu[s, k] = 0.0
            for i in range(N):
                if m[s, i]:
                    n += 1.0
                    for k in range(c):
                        mu[s, k] += Y[s, i, k]
            for k in range(c):
                mu[s, k] /= n
            best = -1.0
            start = 0
            for i in range(N):
                acc = 0.0
                for k in range(c):
                    D[i, k] = (Y[s, i, k] - mu[s, k]) if m[s, i] else 0.0
                    acc += D[i, k] * D[i, k]
                if acc > best:
                    best = acc
                    start = i
            for j in range(c):
                for k in range(c):
                    acc = 0.0
                    for i in range(N):
                        acc += D[i, j] * D[i, k]
                    cov[j, k] = acc / n

            nrm = sqrt(best)
            if nrm <= 1e-15:
                degenerate[s] = 1
            else:
                for k in range(c):
                    v[s, k] = D[start, k] / nrm
                for it in range(max_iter):
                    nrm = 0.0
                    for j in range(c):
                        acc = 0.0
                        for k in range(c):
                            acc += cov[j, k] * v[s, k]
                        u[j] = acc
                        nrm += acc * acc
                    nrm = sqrt(nrm)
                    if nrm <= 1e-300:
                        degenerate[s] = 1
                        break
                    step = 0.0
                    for k in range(c):
                        u[k] /= nrm
                        diff = u[k] - v[s, k]
                        step += diff * diff
                        v[s, k] = u[k]
                    if sqrt(step) < tol:
                        break

            if degenerate[s]:
                for k in range(c):
                    v[s, k] = 0.0
                v[s, 0] = 1.0
                continue
            start = 0
            best = -1.0
            for k in range(c):
                if fabs(v[s, k]) > best:
                    best = fabs(v[s, k])
                    start = k
            if v[s, start] < 0:
                for k in range(c):
                    v[s, k] = -v[s, k]
            for i in range(N):
                acc = 0.0
                for k in range(c):
                    acc += D[i, k] * v[s, k]
                proj[s, i] = acc
    return mu_arr, v_arr, s_arr, deg_arr.astype(bool)
