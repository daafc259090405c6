# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-step edge kernels; same contracts as ``_core_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, sqrt, sin, cos, INFINITY

cnp.import_array()


from dtvopt._core_py import CollisionError


cdef inline double _sgn(double x) nogil:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


cdef inline double _sig(double x, double alpha) nogil:
    if alpha == 0.0:
        return _sgn(x)
    if alpha == 1.0:
        return x
    return _sgn(x) * pow(fabs(x), alpha)


def sign_coupling(const double[:, ::1] Z, const cnp.intp_t[::1] tails,
                  const cnp.intp_t[::1] heads, const double[::1] gains, double alpha):
    cdef Py_ssize_t n = Z.shape[0], m = Z.shape[1], ne = tails.shape[0]
    cdef Py_ssize_t k, c, a, b
    cdef double d, s, l1
    C_arr = np.zeros((n, m))
    rates_arr = np.zeros(ne)
    cdef double[:, ::1] C = C_arr
    cdef double[::1] rates = rates_arr
    with nogil:
        for k in range(ne):
            a = tails[k]
            b = heads[k]
            l1 = 0.0
            for c in range(m):
                d = Z[a, c] - Z[b, c]
                l1 += fabs(d)
                s = gains[k] * _sig(d, alpha)
                C[a, c] += s
                C[b, c] -= s
            rates[k] = l1
    return C_arr, rates_arr


def layer_coupling(const double[:, ::1] Z, const cnp.intp_t[::1] tails,
                   const cnp.intp_t[::1] heads, const double[::1] gains, double width):
    cdef Py_ssize_t n = Z.shape[0], m = Z.shape[1], ne = tails.shape[0]
    cdef Py_ssize_t k, c, a, b
    cdef double d, nrm2, den, scale, s
    C_arr = np.zeros((n, m))
    rates_arr = np.zeros(ne)
    cdef double[:, ::1] C = C_arr
    cdef double[::1] rates = rates_arr
    with nogil:
        for k in range(ne):
            a = tails[k]
            b = heads[k]
            nrm2 = 0.0
            for c in range(m):
                d = Z[a, c] - Z[b, c]
                nrm2 += d * d
            den = sqrt(nrm2) + width
            scale = 1.0 / den if den > 0.0 else 0.0
            for c in range(m):
                s = gains[k] * (Z[a, c] - Z[b, c]) * scale
                C[a, c] += s
                C[b, c] -= s
            rates[k] = nrm2 * scale
    return C_arr, rates_arr


def potential_coupling(const double[:, ::1] X, const cnp.intp_t[::1] tails,
                       const cnp.intp_t[::1] heads, const unsigned char[:, ::1] connected,
                       double R, double d):
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1], ne = tails.shape[0]
    cdef Py_ssize_t k, c, a, b
    cdef double nrm2, s, p, smin = INFINITY, gap
    C_arr = np.zeros((n, m))
    cdef double[:, ::1] C = C_arr
    for k in range(ne):
        a = tails[k]
        b = heads[k]
        nrm2 = 0.0
        for c in range(m):
            nrm2 += (X[a, c] - X[b, c]) * (X[a, c] - X[b, c])
        s = sqrt(nrm2)
        if s <= 0.0:
            raise CollisionError(f"agents {a + 1} and {b + 1} collided")
        if s < smin:
            smin = s
        if connected[a, b]:
            if s < R:
                gap = R - s
                p = (s - d) * (1.0 / (s * s) + 1.0 / (gap * gap))
            else:
                p = INFINITY
        else:
            p = (s - d) / (s * s) * (R - s) / (R - d) if s < R else 0.0
        for c in range(m):
            C[a, c] += p * (X[a, c] - X[b, c]) / s
            C[b, c] -= p * (X[a, c] - X[b, c]) / s
    return C_arr, smin


def proximity_edges(const double[:, ::1] X, double R):
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1]
    cdef Py_ssize_t i, j, c, cnt = 0
    cdef double d2, diff, R2 = R * R
    tails_arr = np.empty(n * (n - 1) // 2 if n > 1 else 0, dtype=np.intp)
    heads_arr = np.empty_like(tails_arr)
    cdef cnp.intp_t[::1] tails = tails_arr
    cdef cnp.intp_t[::1] heads = heads_arr
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d2 = 0.0
                for c in range(m):
                    diff = X[i, c] - X[j, c]
                    d2 += diff * diff
                if d2 < R2:
                    tails[cnt] = i
                    heads[cnt] = j
                    cnt += 1
    return tails_arr[:cnt].copy(), heads_arr[:cnt].copy()


def pair_distance_range(const double[:, ::1] X):
    cdef Py_ssize_t n = X.shape[0], m = X.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double d2, diff, lo = INFINITY, hi = 0.0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                d2 = 0.0
                for c in range(m):
                    diff = X[i, c] - X[j, c]
                    d2 += diff * diff
                if d2 < lo:
                    lo = d2
                if d2 > hi:
                    hi = d2
    return sqrt(lo), sqrt(hi)


def eval_signals(const double[::1] code, const double[::1] amp, const double[::1] omega,
                 const double[::1] phase, const double[::1] offset, double t):
    # works on any shape via the flattened views the caller passes
    cdef Py_ssize_t k, n = code.shape[0]
    cdef double s, c, w, a, r
    val_arr = np.empty(n)
    d1_arr = np.empty(n)
    d2_arr = np.empty(n)
    cdef double[::1] val = val_arr
    cdef double[::1] d1 = d1_arr
    cdef double[::1] d2 = d2_arr
    r = 1.0 / (t + 1.0)
    with nogil:
        for k in range(n):
            a = amp[k]
            w = omega[k]
            s = sin(w * t + phase[k])
            c = cos(w * t + phase[k])
            if code[k] == 0.0:
                val[k] = a * s
                d1[k] = a * w * c
                d2[k] = -a * w * w * s
            elif code[k] == 1.0:
                val[k] = a * c
                d1[k] = -a * w * s
                d2[k] = -a * w * w * c
            elif code[k] == 2.0:
                val[k] = a * s * r
                d1[k] = a * (w * c * r - s * r * r)
                d2[k] = a * (-w * w * s * r - 2.0 * w * c * r * r + 2.0 * s * r * r * r)
            else:
                val[k] = 0.0
                d1[k] = 0.0
                d2[k] = 0.0
            val[k] += offset[k]
    return val_arr, d1_arr, d2_arr


cdef void _jacobi_eig(double* A, double* Q, Py_ssize_t m) noexcept nogil:
    # cyclic Jacobi on a symmetric m x m row-major block; eigenvalues end up on A's diagonal
    cdef Py_ssize_t p, q, r, sweep
    cdef double off, apq, theta, t, c, s, arp, arq, qrp, qrq, scale
    for p in range(m):
        for q in range(m):
            Q[p * m + q] = 1.0 if p == q else 0.0
    for sweep in range(60):
        off = 0.0
        scale = 0.0
        for p in range(m):
            scale += A[p * m + p] * A[p * m + p]
            for q in range(p + 1, m):
                off += A[p * m + q] * A[p * m + q]
        if off <= 1e-30 * scale or off == 0.0:
            return
        for p in range(m - 1):
            for q in range(p + 1, m):
                apq = A[p * m + q]
                if apq == 0.0:
                    continue
                theta = (A[q * m + q] - A[p * m + p]) / (2.0 * apq)
                t = (1.0 if theta >= 0.0 else -1.0) / (fabs(theta) + sqrt(theta * theta + 1.0))
                c = 1.0 / sqrt(t * t + 1.0)
                s = t * c
                for r in range(m):
                    arp = A[r * m + p]
                    arq = A[r * m + q]
                    A[r * m + p] = c * arp - s * arq
                    A[r * m + q] = s * arp + c * arq
                for r in range(m):
                    arp = A[p * m + r]
                    arq = A[q * m + r]
                    A[p * m + r] = c * arp - s * arq
                    A[q * m + r] = s * arp + c * arq
                for r in range(m):
                    qrp = Q[r * m + p]
                    qrq = Q[r * m + q]
                    Q[r * m + p] = c * qrp - s * qrq
                    Q[r * m + q] = s * qrp + c * qrq


def pd_inverse(const double[:, :, ::1] M, double floor):
    cdef Py_ssize_t n = M.shape[0], m = M.shape[1]
    cdef Py_ssize_t i, a, b, k
    cdef double lam, acc, acc_inv
    P_arr = np.empty((n, m, m))
    Pinv_arr = np.empty((n, m, m))
    work_arr = np.empty(2 * m * m + m)
    cdef double[:, :, ::1] P = P_arr
    cdef double[:, :, ::1] Pinv = Pinv_arr
    cdef double[::1] work = work_arr
    cdef double* A = &work[0]
    cdef double* Q = &work[m * m]
    cdef double* w = &work[2 * m * m]
    with nogil:
        for i in range(n):
            for a in range(m):
                for b in range(m):
                    A[a * m + b] = 0.5 * (M[i, a, b] + M[i, b, a])
            _jacobi_eig(A, Q, m)
            for k in range(m):
                lam = A[k * m + k]
                w[k] = lam if lam > floor else floor
            for a in range(m):
                for b in range(m):
                    acc = 0.0
                    acc_inv = 0.0
                    for k in range(m):
                        acc += Q[a * m + k] * w[k] * Q[b * m + k]
                        acc_inv += Q[a * m + k] * Q[b * m + k] / w[k]
                    P[i, a, b] = acc
                    Pinv[i, a, b] = acc_inv
    return P_arr, Pinv_arr
