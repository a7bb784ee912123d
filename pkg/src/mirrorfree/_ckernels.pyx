# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the batched kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def cubic_blocks(Z, Py_ssize_t split, double cubic, double linear):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef Py_ssize_t N = z.shape[0], D = z.shape[1], i, j
    out_arr = np.empty((N, D))
    cdef double[:, ::1] out = out_arr
    cdef double sx, sy, cx, cy
    for i in range(N):
        sx = 0.0
        sy = 0.0
        for j in range(split):
            sx += z[i, j] * z[i, j]
        for j in range(split, D):
            sy += z[i, j] * z[i, j]
        cx = cubic * sx + linear
        cy = cubic * sy + linear
        for j in range(split):
            out[i, j] = cx * z[i, j]
        for j in range(split, D):
            out[i, j] = cy * z[i, j]
    return out_arr


cdef void _grad_f(double[:, ::1] z, Py_ssize_t i, Py_ssize_t off, Py_ssize_t n,
                  double[:, ::1] E, double[:, ::1] A, double[::1] b,
                  double[:, ::1] C, double[::1] d,
                  double[::1] ev, double[::1] r, double[::1] cv,
                  double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t j, k
    cdef double sq = 0.0, acc
    for j in range(n):
        acc = 0.0
        for k in range(n):
            acc += E[j, k] * z[i, off + k]
        ev[j] = acc
        sq += acc * acc
        acc = -b[j]
        for k in range(n):
            acc += A[j, k] * z[i, off + k]
        r[j] = acc * acc * acc
        acc = -d[j]
        for k in range(n):
            acc += C[j, k] * z[i, off + k]
        cv[j] = acc
    for k in range(n):
        acc = 0.0
        for j in range(n):
            acc += sq * ev[j] * E[j, k] + r[j] * A[j, k] + cv[j] * C[j, k]
        out[i, off + k] = acc


def quartic_saddle(Z, E, A, b, C, d, B):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[:, ::1] e = np.ascontiguousarray(E, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[::1] bb = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[::1] dd = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[:, ::1] bm = np.ascontiguousarray(B, dtype=np.float64)
    cdef Py_ssize_t N = z.shape[0], n = e.shape[0], i, j, k
    out_arr = np.empty((N, 2 * n))
    cdef double[:, ::1] out = out_arr
    cdef double[::1] ev = np.empty(n), r = np.empty(n), cv = np.empty(n)
    cdef double acc
    for i in range(N):
        _grad_f(z, i, 0, n, e, a, bb, c, dd, ev, r, cv, out)
        _grad_f(z, i, n, n, e, a, bb, c, dd, ev, r, cv, out)
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += bm[j, k] * z[i, n + k]
            out[i, j] += acc
            acc = 0.0
            for k in range(n):
                acc += bm[k, j] * z[i, k]
            out[i, n + j] -= acc
    return out_arr


def quartic_game(Z, A):
    cdef double[:, ::1] z = np.ascontiguousarray(Z, dtype=np.float64)
    cdef double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef Py_ssize_t N = z.shape[0], n = a.shape[0], i, j, k
    out_arr = cubic_blocks(z, n, 4.0, 0.0)
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for i in range(N):
        for j in range(n):
            acc = 0.0
            for k in range(n):
                acc += a[j, k] * z[i, n + k]
            out[i, j] += acc
            acc = 0.0
            for k in range(n):
                acc += a[k, j] * z[i, k]
            out[i, n + j] -= acc
    return out_arr


def segment_sums(V, dz, weights):
    cdef double[:, :, ::1] v = np.ascontiguousarray(V, dtype=np.float64)
    cdef double[:, ::1] dzv = np.ascontiguousarray(dz, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef Py_ssize_t S = v.shape[0], Q = v.shape[1], D = v.shape[2], s, q, j
    out_arr = np.empty(S)
    cdef double[::1] out = out_arr
    cdef double acc, inner
    for s in range(S):
        acc = 0.0
        for q in range(Q):
            inner = 0.0
            for j in range(D):
                inner += v[s, q, j] * dzv[s, j]
            acc += w[q] * inner
        out[s] = acc
    return out_arr
