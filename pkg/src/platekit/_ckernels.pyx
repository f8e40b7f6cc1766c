# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels; see ``platekit.kernels`` for the numpy versions."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def conjugate_scatter(const double[:, :, ::1] A, const double[:, :, ::1] X, const cnp.int64_t[:, ::1] dofs):
    cdef Py_ssize_t M = A.shape[0], r = A.shape[1], w = X.shape[2]
    cdef Py_ssize_t m, a, b, i, j, base
    cdef double s
    rows_a = np.empty(M * w * w, dtype=np.int64)
    cols_a = np.empty(M * w * w, dtype=np.int64)
    vals_a = np.empty(M * w * w, dtype=np.float64)
    cdef cnp.int64_t[::1] rows = rows_a
    cdef cnp.int64_t[::1] cols = cols_a
    cdef double[::1] vals = vals_a
    cdef double[:, ::1] AX = np.empty((r, w))
    with nogil:
        for m in range(M):
            for a in range(r):
                for j in range(w):
                    s = 0.0
                    for b in range(r):
                        s = s + A[m, a, b] * X[m, b, j]
                    AX[a, j] = s
            base = m * w * w
            for i in range(w):
                for j in range(w):
                    s = 0.0
                    for a in range(r):
                        s = s + X[m, a, i] * AX[a, j]
                    vals[base + i * w + j] = s
                    rows[base + i * w + j] = dofs[m, i]
                    cols[base + i * w + j] = dofs[m, j]
    return rows_a, cols_a, vals_a
