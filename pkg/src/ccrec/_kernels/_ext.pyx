# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled aggregation kernel: fused residual add + weighted CSR gather."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def csr_residual_aggregate(const long long[::1] indptr,
                           const long long[::1] indices,
                           const double[::1] coef,
                           const double[:, ::1] other,
                           const double[:, ::1] base,
                           double[:, ::1] out):
    """out[r] = base[r] + sum_{e in row r} coef[e] * other[indices[e]]."""
    cdef Py_ssize_t n_rows = indptr.shape[0] - 1
    cdef Py_ssize_t dim = other.shape[1]
    cdef Py_ssize_t r, e, d, nbr
    cdef double w
    with nogil:
        for r in range(n_rows):
            for d in range(dim):
                out[r, d] = base[r, d]
            for e in range(indptr[r], indptr[r + 1]):
                nbr = indices[e]
                w = coef[e]
                for d in range(dim):
                    out[r, d] += w * other[nbr, d]
