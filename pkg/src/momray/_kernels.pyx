# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for ray quadrature and backprojection."""
import numpy as np

cimport numpy as cnp
from libc.math cimport exp, floor

cnp.import_array()


def moments_blob(const double[:, ::1] X, const double[:, ::1] XI, const double[::1] t0, const double[::1] t1,
                 const double[::1] gx, const double[::1] gw, int panels,
                 const double[:, ::1] centers, const double[::1] widths, int profile,
                 const double[:, ::1] A, const double[:, :, ::1] Bv, int K):
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], Q = gx.shape[0], B = centers.shape[0]
    cdef Py_ssize_t r, p, q, b, a, j
    cdef double h, t, w, val, r2, d, lin, prof, tp, cut2
    cdef double[:, ::1] out = np.zeros((K + 1, N))
    cdef double[::1] inv2 = np.empty(B)
    cdef double[::1] pt = np.empty(n)
    for b in range(B):
        inv2[b] = 1.0 / (widths[b] * widths[b])
    cut2 = 64.0
    with nogil:
        for r in range(N):
            if t1[r] <= t0[r]:
                continue
            h = (t1[r] - t0[r]) / panels
            for p in range(panels):
                for q in range(Q):
                    t = t0[r] + h * (p + 0.5 * (gx[q] + 1.0))
                    w = 0.5 * h * gw[q]
                    for a in range(n):
                        pt[a] = X[r, a] + t * XI[r, a]
                    val = 0.0
                    for b in range(B):
                        r2 = 0.0
                        lin = A[r, b]
                        for a in range(n):
                            d = pt[a] - centers[b, a]
                            r2 = r2 + d * d
                            lin = lin + Bv[r, b, a] * d
                        r2 = r2 * inv2[b]
                        if profile == 0:
                            if r2 > cut2:
                                continue
                            prof = exp(-0.5 * r2)
                        else:
                            if r2 >= 1.0:
                                continue
                            prof = (1.0 - r2) * (1.0 - r2)
                            prof = prof * prof
                        val = val + prof * lin
                    tp = w * val
                    for j in range(K + 1):
                        out[j, r] += tp
                        tp = tp * t
    return np.asarray(out)


cdef inline void _cubic(double s, double* wts) noexcept nogil:
    wts[0] = -(s - 1.0) * (s - 2.0) * (s - 3.0) / 6.0
    wts[1] = s * (s - 2.0) * (s - 3.0) / 2.0
    wts[2] = -s * (s - 1.0) * (s - 3.0) / 2.0
    wts[3] = s * (s - 1.0) * (s - 2.0) / 6.0


def moments_grid(const double[:, ::1] X, const double[:, ::1] XI, const double[::1] t0, const double[::1] t1,
                 const double[::1] gx, const double[::1] gw, int panels,
                 const double[:, ::1] values, const double[::1] origin, const double[::1] spacing,
                 const long[::1] counts, double radius, const double[:, ::1] CW, int K):
    """values has shape (prod(counts), ncomp) in C order; dimension 2 or 3."""
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], Q = gx.shape[0], C = values.shape[1]
    cdef Py_ssize_t r, p, q, a, j, c, i0, i1, i2, flat
    cdef double h, t, w, val, u, tp, wt, r2
    cdef long[3] base
    cdef long[3] stride
    cdef double wts[3][4]
    cdef double[:, ::1] out = np.zeros((K + 1, N))
    cdef double[::1] pt = np.empty(n)
    if n < 2 or n > 3:
        raise ValueError("grid kernel supports dimension 2 or 3")
    stride[n - 1] = 1
    for a in range(n - 2, -1, -1):
        stride[a] = stride[a + 1] * counts[a + 1]
    with nogil:
        for r in range(N):
            if t1[r] <= t0[r]:
                continue
            h = (t1[r] - t0[r]) / panels
            for p in range(panels):
                for q in range(Q):
                    t = t0[r] + h * (p + 0.5 * (gx[q] + 1.0))
                    w = 0.5 * h * gw[q]
                    r2 = 0.0
                    for a in range(n):
                        pt[a] = X[r, a] + t * XI[r, a]
                        r2 = r2 + pt[a] * pt[a]
                    if r2 > radius * radius:
                        continue
                    for a in range(n):
                        u = (pt[a] - origin[a]) / spacing[a]
                        base[a] = <long>floor(u) - 1
                        if base[a] < 0:
                            base[a] = 0
                        if base[a] > counts[a] - 4:
                            base[a] = counts[a] - 4
                        _cubic(u - base[a], wts[a])
                    val = 0.0
                    if n == 2:
                        for i0 in range(4):
                            for i1 in range(4):
                                wt = wts[0][i0] * wts[1][i1]
                                flat = (base[0] + i0) * stride[0] + (base[1] + i1)
                                for c in range(C):
                                    val = val + wt * CW[r, c] * values[flat, c]
                    else:
                        for i0 in range(4):
                            for i1 in range(4):
                                for i2 in range(4):
                                    wt = wts[0][i0] * wts[1][i1] * wts[2][i2]
                                    flat = ((base[0] + i0) * stride[0] + (base[1] + i1) * stride[1]
                                            + (base[2] + i2))
                                    for c in range(C):
                                        val = val + wt * CW[r, c] * values[flat, c]
                    tp = w * val
                    for j in range(K + 1):
                        out[j, r] += tp
                        tp = tp * t
    return np.asarray(out)


def backproject(const double[:, ::1] q, const double[::1] cos_phi, const double[::1] sin_phi,
                double s0, double ds, const double[:, ::1] pts):
    cdef Py_ssize_t A = q.shape[0], S = q.shape[1], M = pts.shape[0]
    cdef Py_ssize_t i, a, k
    cdef double s, u, frac, acc
    cdef double[::1] out = np.zeros(M)
    with nogil:
        for i in range(M):
            acc = 0.0
            for a in range(A):
                s = -pts[i, 0] * sin_phi[a] + pts[i, 1] * cos_phi[a]
                u = (s - s0) / ds
                k = <Py_ssize_t>floor(u)
                if k < 0 or k >= S - 1:
                    continue
                frac = u - k
                acc = acc + (1.0 - frac) * q[a, k] + frac * q[a, k + 1]
            out[i] = acc
    return np.asarray(out)
