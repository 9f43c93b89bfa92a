# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the NumPy reference kernels.

Semantics must match smoothdiff._kernels._reference exactly: identical
coordinate-order distance accumulation and (distance, index) lexicographic
tie-breaking. The payoff is O(N^2) loops without N^2 temporaries.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def knn_neighbors(points, int k):
    """Indices of the k nearest points for every point, self excluded."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] pts = \
        np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.int64_t, ndim=2, mode="c"] out = \
        np.empty((n, k), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] bestd = \
        np.empty(k, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1, mode="c"] bestj = \
        np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i, j, m, pos
    cdef double dx, dy, dz, d, inf = np.inf

    for i in range(n):
        for m in range(k):
            bestd[m] = inf
            bestj[m] = -1
        for j in range(n):
            if j == i:
                continue
            dx = pts[i, 0] - pts[j, 0]
            dy = pts[i, 1] - pts[j, 1]
            dz = pts[i, 2] - pts[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            # Insert (d, j) if lexicographically below the current worst.
            if d > bestd[k - 1] or (d == bestd[k - 1] and j > bestj[k - 1]
                                    and bestj[k - 1] >= 0):
                continue
            pos = k - 1
            while pos > 0 and (d < bestd[pos - 1] or
                               (d == bestd[pos - 1] and j < bestj[pos - 1])):
                bestd[pos] = bestd[pos - 1]
                bestj[pos] = bestj[pos - 1]
                pos -= 1
            bestd[pos] = d
            bestj[pos] = j
        for m in range(k):
            out[i, m] = bestj[m]
    return out


def chamfer(p, q):
    """Symmetric squared-distance Chamfer between two point sets."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] a = \
        np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] b = \
        np.ascontiguousarray(q, dtype=np.float64)
    cdef Py_ssize_t na = a.shape[0], nb = b.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1, mode="c"] minb = \
        np.full(nb, np.inf, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double dx, dy, dz, d, rowmin, acc_a = 0.0, acc_b = 0.0

    for i in range(na):
        rowmin = np.inf
        for j in range(nb):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            dz = a[i, 2] - b[j, 2]
            d = (dx * dx + dy * dy) + dz * dz
            if d < rowmin:
                rowmin = d
            if d < minb[j]:
                minb[j] = d
        acc_a += rowmin
    for j in range(nb):
        acc_b += minb[j]
    return acc_a / na + acc_b / nb
