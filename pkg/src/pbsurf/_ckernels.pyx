# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.  Semantics are defined by ``_pykernels``; both
backends must agree bit for bit (summation order is fixed)."""
import numpy as np
from libc.math cimport fabs
from libc.stdlib cimport malloc, free


def sign_norms(const double[:, :, ::1] B):
    cdef Py_ssize_t F = B.shape[0]
    cdef Py_ssize_t N = B.shape[1]
    out = np.zeros(F, dtype=np.float64)
    arg = np.zeros(F, dtype=np.int64)
    if F == 0 or N == 0:
        return out, arg
    cdef double[::1] ov = out
    cdef long long[::1] av = arg
    cdef Py_ssize_t M = (<Py_ssize_t>1) << (N - 1)
    cdef Py_ssize_t t, m, i, j, bi
    cdef double best, val
    cdef double *c = <double *>malloc(N * sizeof(double))
    if c == NULL:
        raise MemoryError()
    try:
        with nogil:
            for t in range(F):
                best = -1.0
                bi = 0
                for m in range(M):
                    for j in range(N):
                        c[j] = 0.0
                    for i in range(N):
                        if i == 0 or ((m >> (i - 1)) & 1) == 0:
                            for j in range(N):
                                c[j] = c[j] + B[t, i, j]
                        else:
                            for j in range(N):
                                c[j] = c[j] - B[t, i, j]
                    val = 0.0
                    for j in range(N):
                        val = val + fabs(c[j])
                    if val > best:
                        best = val
                        bi = m
                ov[t] = best
                av[t] = bi
    finally:
        free(c)
    return out, arg


cdef inline double _orient(double px, double py, double qx, double qy,
                           double rx, double ry) noexcept nogil:
    return (qx - px) * (ry - py) - (qy - py) * (rx - px)


def count_crossings(const long long[::1] tri_a, const double[:, ::1] a0,
                    const double[:, ::1] a1, const long long[::1] tag_a,
                    const long long[::1] tri_b, const double[:, ::1] b0,
                    const double[:, ::1] b1, const long long[::1] tag_b,
                    Py_ssize_t na, Py_ssize_t nb):
    counts = np.zeros((na, nb), dtype=np.int64)
    degen = np.zeros((na, nb), dtype=np.int64)
    cdef long long[:, ::1] cv = counts
    cdef long long[:, ::1] dv = degen
    cdef Py_ssize_t la = tri_a.shape[0]
    cdef Py_ssize_t lb = tri_b.shape[0]
    cdef Py_ssize_t ia = 0, ib = 0, ea, eb, p, q
    cdef long long t
    cdef double o1, o2, o3, o4
    with nogil:
        while ia < la and ib < lb:
            if tri_a[ia] < tri_b[ib]:
                ia += 1
            elif tri_a[ia] > tri_b[ib]:
                ib += 1
            else:
                t = tri_a[ia]
                ea = ia
                while ea < la and tri_a[ea] == t:
                    ea += 1
                eb = ib
                while eb < lb and tri_b[eb] == t:
                    eb += 1
                for p in range(ia, ea):
                    for q in range(ib, eb):
                        o1 = _orient(a0[p, 0], a0[p, 1], a1[p, 0], a1[p, 1], b0[q, 0], b0[q, 1])
                        o2 = _orient(a0[p, 0], a0[p, 1], a1[p, 0], a1[p, 1], b1[q, 0], b1[q, 1])
                        o3 = _orient(b0[q, 0], b0[q, 1], b1[q, 0], b1[q, 1], a0[p, 0], a0[p, 1])
                        o4 = _orient(b0[q, 0], b0[q, 1], b1[q, 0], b1[q, 1], a1[p, 0], a1[p, 1])
                        if o1 == 0.0 or o2 == 0.0 or o3 == 0.0 or o4 == 0.0:
                            dv[tag_a[p], tag_b[q]] += 1
                        elif ((o1 > 0.0) != (o2 > 0.0)) and ((o3 > 0.0) != (o4 > 0.0)):
                            cv[tag_a[p], tag_b[q]] += 1
                ia = ea
                ib = eb
    return counts, degen
