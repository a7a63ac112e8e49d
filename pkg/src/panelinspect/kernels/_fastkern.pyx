# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: lag-domain magnitude sums and patch correlation."""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def samsf(curve):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = np.ascontiguousarray(curve, dtype=np.float64)
    cdef Py_ssize_t n = c.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef double mean = 0.0
    cdef Py_ssize_t i, p, l
    cdef double acc
    for i in range(n):
        mean += c[i]
    mean /= n
    cdef cnp.ndarray[cnp.float64_t, ndim=1] z = np.empty(n, dtype=np.float64)
    for i in range(n):
        z[i] = c[i] - mean
    for p in range(n):
        acc = 0.0
        l = p
        for i in range(n):
            acc += fabs(z[l] + z[i])
            l += 1
            if l == n:
                l = 0
        out[p] = acc
    return out


def zncc(a, b):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] aa = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bb = np.ascontiguousarray(b, dtype=np.float64)
    return _zncc_pair(aa, bb, 0, 0)


cdef double _zncc_pair(cnp.float64_t[:, :] img, cnp.float64_t[:, :] patch,
                       Py_ssize_t x0, Py_ssize_t y0):
    # Two-pass (centered) sums: avoids the cancellation of raw-moment formulas
    # and keeps this path within oracle tolerance.
    cdef Py_ssize_t ph = patch.shape[0], pw = patch.shape[1]
    cdef Py_ssize_t i, j
    cdef double sa = 0.0, sb = 0.0
    cdef double cnt = <double>(ph * pw)
    cdef double a, b, va = 0.0, vb = 0.0, cov = 0.0
    for i in range(ph):
        for j in range(pw):
            sa += img[y0 + i, x0 + j]
            sb += patch[i, j]
    sa /= cnt
    sb /= cnt
    for i in range(ph):
        for j in range(pw):
            a = img[y0 + i, x0 + j] - sa
            b = patch[i, j] - sb
            va += a * a
            vb += b * b
            cov += a * b
    if va <= 0.0 or vb <= 0.0:
        return 0.0
    return cov / sqrt(va * vb)


def zncc_many(image, patch, xs, ys):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img = np.ascontiguousarray(image, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pat = np.ascontiguousarray(patch, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] xa = np.ascontiguousarray(xs, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ya = np.ascontiguousarray(ys, dtype=np.int64)
    cdef Py_ssize_t m = xa.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m, dtype=np.float64)
    cdef Py_ssize_t i
    for i in range(m):
        out[i] = _zncc_pair(img, pat, xa[i], ya[i])
    return out
