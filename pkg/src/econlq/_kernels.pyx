# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Riccati kernels.

Mirror of ``_kernels_py``: same functions, arguments, return tuples and
status codes. All matrices are small and dense, so everything is plain loops
over C-contiguous buffers; no BLAS calls.
"""

import numpy as np
from libc.math cimport fabs, sqrt, isfinite
from libc.float cimport DBL_MIN

cdef enum:
    STATUS_OK = 0
    STATUS_MAX_ITER = 1
    STATUS_DIVERGED = 2
    STATUS_SINGULAR = 3
    STATUS_NONFINITE = 4


cdef inline double _frob(double[:, ::1] X) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            s += X[i, j] * X[i, j]
    return sqrt(s)


cdef inline double _frob_diff(double[:, ::1] X, double[:, ::1] Y) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s = 0.0, d
    for i in range(X.shape[0]):
        for j in range(X.shape[1]):
            d = X[i, j] - Y[i, j]
            s += d * d
    return sqrt(s)


cdef void _riccati_products(double[:, ::1] A, double[:, ::1] B, double[:, ::1] P,
                            double[:, ::1] Rbase, double[:, ::1] S,
                            double[:, ::1] PA, double[:, ::1] PB,
                            double[:, ::1] Rk, double[:, ::1] Sk) noexcept nogil:
    """PA = P A, PB = P B, Rk = Rbase + B' P B, Sk = S + B' P A."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[1]
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for l in range(n):
                acc += P[i, l] * A[l, j]
            PA[i, j] = acc
        for j in range(m):
            acc = 0.0
            for l in range(n):
                acc += P[i, l] * B[l, j]
            PB[i, j] = acc
    for i in range(m):
        for j in range(m):
            acc = Rbase[i, j]
            for l in range(n):
                acc += B[l, i] * PB[l, j]
            Rk[i, j] = acc
        for j in range(n):
            acc = S[i, j]
            for l in range(n):
                acc += B[l, i] * PA[l, j]
            Sk[i, j] = acc


cdef void _riccati_update(double[:, ::1] A, double[:, ::1] Q, double[:, ::1] PA,
                          double[:, ::1] Sk, double[:, ::1] K,
                          double[:, ::1] Pn) noexcept nogil:
    """Pn = sym(Q + A' P A - Sk' K)."""
    cdef Py_ssize_t n = A.shape[0], m = K.shape[0]
    cdef Py_ssize_t i, j, l
    cdef double acc
    for i in range(n):
        for j in range(n):
            acc = Q[i, j]
            for l in range(n):
                acc += A[l, i] * PA[l, j]
            for l in range(m):
                acc -= Sk[l, i] * K[l, j]
            Pn[i, j] = acc
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.5 * (Pn[i, j] + Pn[j, i])
            Pn[i, j] = acc
            Pn[j, i] = acc


cdef int _lu_solve(double[:, ::1] M, double[:, ::1] X, double piv_tol) noexcept nogil:
    """Solve M X = X in place (M overwritten). Returns 1 when a pivot is negligible."""
    cdef Py_ssize_t m = M.shape[0], nr = X.shape[1]
    cdef Py_ssize_t i, j, k, p
    cdef double amax = 0.0, big, t, piv
    for i in range(m):
        for j in range(m):
            if fabs(M[i, j]) > amax:
                amax = fabs(M[i, j])
    if amax < 1e-300:
        amax = 1e-300
    for k in range(m):
        p = k
        big = fabs(M[k, k])
        for i in range(k + 1, m):
            if fabs(M[i, k]) > big:
                big = fabs(M[i, k])
                p = i
        if big <= piv_tol * amax:
            return 1
        if p != k:
            for j in range(m):
                t = M[k, j]; M[k, j] = M[p, j]; M[p, j] = t
            for j in range(nr):
                t = X[k, j]; X[k, j] = X[p, j]; X[p, j] = t
        piv = M[k, k]
        for i in range(k + 1, m):
            t = M[i, k] / piv
            M[i, k] = t
            for j in range(k + 1, m):
                M[i, j] -= t * M[k, j]
            for j in range(nr):
                X[i, j] -= t * X[k, j]
    for k in range(m - 1, -1, -1):
        for j in range(nr):
            t = X[k, j]
            for i in range(k + 1, m):
                t -= M[k, i] * X[i, j]
            X[k, j] = t / M[k, k]
    return 0


cdef void _jacobi_eigh(double[:, ::1] M, double[::1] lam, double[:, ::1] V) noexcept nogil:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix (M is destroyed)."""
    cdef Py_ssize_t m = M.shape[0]
    cdef Py_ssize_t i, j, k, sweep
    cdef double off, total, theta, t, c, s, tau, apq, app, aqq, akp, akq, vkp, vkq
    for i in range(m):
        for j in range(m):
            V[i, j] = 1.0 if i == j else 0.0
    for sweep in range(100):
        off = 0.0
        total = 0.0
        for i in range(m):
            total += M[i, i] * M[i, i]
            for j in range(i + 1, m):
                off += 2.0 * M[i, j] * M[i, j]
        total += off
        if off <= 1e-30 * total or off == 0.0:
            break
        for i in range(m - 1):
            for j in range(i + 1, m):
                apq = M[i, j]
                if apq == 0.0:
                    continue
                app = M[i, i]
                aqq = M[j, j]
                theta = (aqq - app) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                c = 1.0 / sqrt(1.0 + t * t)
                s = t * c
                tau = s / (1.0 + c)
                M[i, i] = app - t * apq
                M[j, j] = aqq + t * apq
                M[i, j] = 0.0
                M[j, i] = 0.0
                for k in range(m):
                    if k != i and k != j:
                        akp = M[k, i]
                        akq = M[k, j]
                        M[k, i] = akp - s * (akq + tau * akp)
                        M[i, k] = M[k, i]
                        M[k, j] = akq + s * (akp - tau * akq)
                        M[j, k] = M[k, j]
                for k in range(m):
                    vkp = V[k, i]
                    vkq = V[k, j]
                    V[k, i] = vkp - s * (vkq + tau * vkp)
                    V[k, j] = vkq + s * (vkp - tau * vkq)
    for i in range(m):
        lam[i] = M[i, i]


cdef void _sym_pinv_kernel(double[:, ::1] Rk, double rank_rel_tol, double floor, double[:, ::1] work,
                           double[::1] lam, double[:, ::1] V,
                           double[:, ::1] Rpinv, double[:, ::1] G) noexcept nogil:
    cdef Py_ssize_t m = Rk.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double lmax = 0.0, thr, a, b
    for i in range(m):
        for j in range(m):
            work[i, j] = 0.5 * (Rk[i, j] + Rk[j, i])
    _jacobi_eigh(work, lam, V)
    for k in range(m):
        if fabs(lam[k]) > lmax:
            lmax = fabs(lam[k])
    if floor > lmax:
        lmax = floor
    thr = rank_rel_tol * lmax * m
    if thr < DBL_MIN:
        thr = DBL_MIN
    for i in range(m):
        for j in range(m):
            a = 0.0
            b = 0.0
            for k in range(m):
                if fabs(lam[k]) > thr:
                    a += V[i, k] * V[j, k] / lam[k]
                else:
                    b += V[i, k] * V[j, k]
            Rpinv[i, j] = a
            G[i, j] = b


def regularized_iteration(A, B, Q, S, Rg, P0, double tol, long max_iter,
                          double div_limit, double piv_tol):
    cdef double[:, ::1] a = np.array(A, dtype=np.float64, order="C")
    cdef double[:, ::1] b = np.array(B, dtype=np.float64, order="C")
    cdef double[:, ::1] q = np.array(Q, dtype=np.float64, order="C")
    cdef double[:, ::1] s = np.array(S, dtype=np.float64, order="C")
    cdef double[:, ::1] rg = np.array(Rg, dtype=np.float64, order="C")
    cdef Py_ssize_t n = a.shape[0], m = b.shape[1]
    P_arr = np.array(P0, dtype=np.float64, order="C")
    Pn_arr = np.empty((n, n))
    cdef double[:, ::1] P = P_arr
    cdef double[:, ::1] Pn = Pn_arr
    cdef double[:, ::1] PA = np.empty((n, n))
    cdef double[:, ::1] PB = np.empty((n, m))
    cdef double[:, ::1] Rk = np.empty((m, m))
    cdef double[:, ::1] Sk = np.empty((m, n))
    cdef double[:, ::1] K = np.empty((m, n))
    cdef long it = 0
    cdef int status = STATUS_MAX_ITER
    cdef double nrm, diff, scale
    cdef Py_ssize_t i, j
    cdef bint finite
    with nogil:
        while it < max_iter:
            _riccati_products(a, b, P, rg, s, PA, PB, Rk, Sk)
            for i in range(m):
                for j in range(n):
                    K[i, j] = Sk[i, j]
            if m > 0 and _lu_solve(Rk, K, piv_tol):
                status = STATUS_SINGULAR
                break
            # Rk was destroyed by the LU; Sk is intact.
            _riccati_update(a, q, PA, Sk, K, Pn)
            it += 1
            finite = True
            for i in range(n):
                for j in range(n):
                    if not isfinite(Pn[i, j]):
                        finite = False
            if not finite:
                status = STATUS_NONFINITE
                break
            nrm = _frob(Pn)
            diff = _frob_diff(Pn, P)
            scale = 1.0 + _frob(P)
            P[:, :] = Pn
            if nrm > div_limit:
                status = STATUS_DIVERGED
                break
            if diff <= tol * scale:
                status = STATUS_OK
                break
    return P_arr, it, status


def generalized_recursion(A, B, Q, S, R, P0, long n_steps, double rank_rel_tol,
                          double conv_tol, double div_limit, bint store):
    cdef double[:, ::1] a = np.array(A, dtype=np.float64, order="C")
    cdef double[:, ::1] b = np.array(B, dtype=np.float64, order="C")
    cdef double[:, ::1] q = np.array(Q, dtype=np.float64, order="C")
    cdef double[:, ::1] s = np.array(S, dtype=np.float64, order="C")
    cdef double[:, ::1] r = np.array(R, dtype=np.float64, order="C")
    cdef Py_ssize_t n = a.shape[0], m = b.shape[1]
    P_arr = np.array(P0, dtype=np.float64, order="C")
    K_arr = np.zeros((m, n))
    cdef double[:, ::1] P = P_arr
    cdef double[:, ::1] K = K_arr
    cdef double[:, ::1] Pn = np.empty((n, n))
    cdef double[:, ::1] PA = np.empty((n, n))
    cdef double[:, ::1] PB = np.empty((n, m))
    cdef double[:, ::1] Rk = np.empty((m, m))
    cdef double[:, ::1] Sk = np.empty((m, n))
    cdef double[:, ::1] work = np.empty((m, m))
    cdef double[::1] lam = np.empty(m)
    cdef double[:, ::1] V = np.empty((m, m))
    cdef double[:, ::1] Rpinv = np.empty((m, m))
    cdef double[:, ::1] G = np.empty((m, m))
    cdef double[:, ::1] G_prev = np.empty((m, m))
    cdef double[:, :, ::1] Ps
    cdef double[:, :, ::1] Ks
    cap = n_steps if store else 0
    Ps_arr = np.empty((cap + 1, n, n)) if store else None
    Ks_arr = np.empty((cap, m, n)) if store else None
    if store:
        Ps = Ps_arr
        Ks = Ks_arr
        Ps[0, :, :] = P
    cdef long it = 0
    cdef long changes = 0
    cdef int status = STATUS_OK
    cdef bint have_prev = False, finite, converged = False
    cdef double nrm, diff, scale, acc, floor
    cdef Py_ssize_t i, j, l
    with nogil:
        while it < n_steps:
            _riccati_products(a, b, P, r, s, PA, PB, Rk, Sk)
            # cancellation in R + B'PB is relative to the operands, not the sum
            floor = _frob(r) + _frob_diff(Rk, r)
            _sym_pinv_kernel(Rk, rank_rel_tol, floor, work, lam, V, Rpinv, G)
            if have_prev and _frob_diff(G, G_prev) > 1e-8:
                changes += 1
            G_prev[:, :] = G
            have_prev = True
            for i in range(m):
                for j in range(n):
                    acc = 0.0
                    for l in range(m):
                        acc += Rpinv[i, l] * Sk[l, j]
                    K[i, j] = acc
            _riccati_update(a, q, PA, Sk, K, Pn)
            it += 1
            finite = True
            for i in range(n):
                for j in range(n):
                    if not isfinite(Pn[i, j]):
                        finite = False
            if not finite:
                status = STATUS_NONFINITE
                break
            if store:
                Ps[it, :, :] = Pn
                Ks[it - 1, :, :] = K
            nrm = _frob(Pn)
            diff = _frob_diff(Pn, P)
            scale = 1.0 + _frob(P)
            P[:, :] = Pn
            if nrm > div_limit:
                status = STATUS_DIVERGED
                break
            if conv_tol > 0 and diff <= conv_tol * scale:
                converged = True
                break
    if status == STATUS_OK and conv_tol > 0 and n_steps > 0 and not converged:
        status = STATUS_MAX_ITER
    if store:
        Ps_arr = Ps_arr[: it + 1].copy()
        Ks_arr = Ks_arr[:it].copy()
    return P_arr, K_arr, it, status, changes, Ps_arr, Ks_arr
