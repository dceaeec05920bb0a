# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled distance/kernel hot loops (Gaussian-kernel density weights)."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log

cnp.import_array()

BACKEND = "compiled"


def sq_dists(double[:, ::1] A, double[:, ::1] B):
    """Pairwise squared Euclidean distances, shape (len(A), len(B))."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], f = A.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double d, diff
    for i in range(n):
        for j in range(m):
            d = 0.0
            for k in range(f):
                diff = A[i, k] - B[j, k]
                d += diff * diff
            o[i, j] = d
    return out


def kernel_stats(double[:, ::1] A, double[:, ::1] B, double inv_scale):
    """Per-row log-sum-exp and softmax weights of -inv_scale * ||a_i - b_j||^2."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], f = A.shape[1]
    cdef cnp.ndarray[double, ndim=1] lse = np.empty(n, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] W = np.empty((n, m), dtype=np.float64)
    cdef double[::1] l = lse
    cdef double[:, ::1] w = W
    cdef Py_ssize_t i, j, k
    cdef double d, diff, mx, s, e
    for i in range(n):
        mx = -1e308
        for j in range(m):
            d = 0.0
            for k in range(f):
                diff = A[i, k] - B[j, k]
                d += diff * diff
            d *= -inv_scale
            w[i, j] = d
            if d > mx:
                mx = d
        s = 0.0
        for j in range(m):
            e = exp(w[i, j] - mx)
            w[i, j] = e
            s += e
        l[i] = mx + log(s)
        for j in range(m):
            w[i, j] /= s
    return lse, W
