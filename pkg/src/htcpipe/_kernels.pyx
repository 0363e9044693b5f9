# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled RBF kernel hot path.

The GA fitness loop assembles many small kernel matrices and evaluates the
interpolant at every face node; fusing distance and kernel evaluation here
avoids the temporaries the numpy fallback allocates.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

KERNEL_GAUSSIAN = 0
KERNEL_MULTIQUADRIC = 1


cdef inline double _phi(double r2, double e2, int kind) nogil:
    if kind == 0:
        return exp(-e2 * r2)
    return sqrt(1.0 + e2 * r2)


def kernel_matrix(a, b, double eps, int kind):
    """phi(||a_i - b_j||) for all pairs; a (na,3), b (nb,3) -> (na,nb)."""
    if kind != 0 and kind != 1:
        raise ValueError(f"unknown kernel id {kind}")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((na, nb), dtype=np.float64)
    cdef double e2 = eps * eps
    cdef double dx, dy, dz, r2
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(na):
            for j in range(nb):
                dx = av[i, 0] - bv[j, 0]
                dy = av[i, 1] - bv[j, 1]
                dz = av[i, 2] - bv[j, 2]
                r2 = dx * dx + dy * dy + dz * dz
                out[i, j] = _phi(r2, e2, kind)
    return out


def rbf_eval(centers, coeffs, points, double eps, int kind):
    """sum_j c_j * phi(||p_i - x_j||) at every point; (npoints,)."""
    if kind != 0 and kind != 1:
        raise ValueError(f"unknown kernel id {kind}")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wv = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pv = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t m = cv.shape[0], n = pv.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double e2 = eps * eps
    cdef double dx, dy, dz, acc
    cdef Py_ssize_t i, j
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(m):
                dx = pv[i, 0] - cv[j, 0]
                dy = pv[i, 1] - cv[j, 1]
                dz = pv[i, 2] - cv[j, 2]
                acc += wv[j] * _phi(dx * dx + dy * dy + dz * dz, e2, kind)
            out[i] = acc
    return out
