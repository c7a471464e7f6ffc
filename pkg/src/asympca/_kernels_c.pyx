# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.

Same update rules and tie conventions as `_kernels_py`; that module is the
readable reference. Differences are limited to floating-point summation
order.
"""
import numpy as np

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

BACKEND_NAME = "cython"


cdef inline Py_ssize_t _upper_bound(const double[::1] ys, Py_ssize_t n, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if ys[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


def expectile_sorted(const double[::1] ys, double tau, int max_iter=200):
    """Scalar expectile of pre-sorted values; see _kernels_py.expectile_sorted."""
    cdef Py_ssize_t n = ys.shape[0]
    cdef double* prefix = <double*> malloc((n + 1) * sizeof(double))
    if prefix == NULL:
        raise MemoryError
    cdef Py_ssize_t i, idx, new_idx, n_above
    cdef double total, e, s_above, num, den
    cdef int iterations = 0
    cdef bint converged = False
    try:
        prefix[0] = 0.0
        for i in range(n):
            prefix[i + 1] = prefix[i] + ys[i]
        total = prefix[n]
        e = total / n
        idx = _upper_bound(ys, n, e)
        for _ in range(max_iter):
            iterations += 1
            n_above = n - idx
            s_above = total - prefix[idx]
            num = tau * s_above + (1.0 - tau) * prefix[idx]
            den = tau * n_above + (1.0 - tau) * idx
            e = num / den
            new_idx = _upper_bound(ys, n, e)
            if new_idx == idx:
                converged = True
                break
            idx = new_idx
    finally:
        free(prefix)
    return e, iterations, converged


cdef int _chol_tol(double* G, double* L, Py_ssize_t k, double thresh) noexcept nogil:
    """Tolerant Cholesky; returns 1 when a pivot falls at or below thresh."""
    cdef Py_ssize_t i, j, m
    cdef double s
    for j in range(k):
        s = G[j * k + j]
        for m in range(j):
            s -= L[j * k + m] * L[j * k + m]
        if s <= thresh:
            return 1
        L[j * k + j] = sqrt(s)
        for i in range(j + 1, k):
            s = G[i * k + j]
            for m in range(j):
                s -= L[i * k + m] * L[j * k + m]
            L[i * k + j] = s / L[j * k + j]
    return 0


cdef void _chol_solve(double* L, double* b, double* x, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double s
    for j in range(k):
        s = b[j]
        for i in range(j):
            s -= L[j * k + i] * x[i]
        x[j] = s / L[j * k + j]
    for j in range(k - 1, -1, -1):
        s = x[j]
        for i in range(j + 1, k):
            s -= L[i * k + j] * x[i]
        x[j] = s / L[j * k + j]


cdef int _solve_row(const double[:, ::1] Y, const double[:, ::1] V, const double* wrow,
                    Py_ssize_t i, Py_ssize_t p, Py_ssize_t k,
                    double rank_rtol, double ridge_scale,
                    double* G, double* L, double* b, double* u) noexcept nogil:
    """Weighted normal-equation solve for one row; returns 1 when ridged."""
    cdef Py_ssize_t j, a, c
    cdef double w, yv, dmax, trace, thresh
    cdef int used_ridge = 0
    for a in range(k):
        b[a] = 0.0
        for c in range(k):
            G[a * k + c] = 0.0
    for j in range(p):
        w = wrow[j]
        yv = w * Y[i, j]
        for a in range(k):
            b[a] += yv * V[j, a]
            for c in range(a + 1):
                G[a * k + c] += w * V[j, a] * V[j, c]
    dmax = 0.0
    trace = 0.0
    for a in range(k):
        for c in range(a + 1, k):
            G[a * k + c] = G[c * k + a]
        if G[a * k + a] > dmax:
            dmax = G[a * k + a]
        trace += G[a * k + a]
    thresh = rank_rtol * (dmax if dmax > 0.0 else 0.0)
    if _chol_tol(G, L, k, thresh) != 0:
        used_ridge = 1
        for a in range(k):
            G[a * k + a] += ridge_scale * trace
        if _chol_tol(G, L, k, thresh) != 0:
            for a in range(k):
                u[a] = 0.0
            return used_ridge
    _chol_solve(L, b, u, k)
    return used_ridge


def solve_rows(const double[:, ::1] Y, const double[:, ::1] V, const double[:, ::1] W,
               double rank_rtol=1e-12, double ridge_scale=1e-10):
    """Row-wise weighted least squares; see _kernels_py.solve_rows."""
    cdef Py_ssize_t n = Y.shape[0], p = Y.shape[1], k = V.shape[1]
    U_arr = np.empty((n, k))
    cdef double[:, ::1] U = U_arr
    cdef double* G = <double*> malloc(k * k * sizeof(double))
    cdef double* L = <double*> malloc(k * k * sizeof(double))
    cdef double* b = <double*> malloc(k * sizeof(double))
    cdef double* u = <double*> malloc(k * sizeof(double))
    cdef double* wrow = <double*> malloc(p * sizeof(double))
    if G == NULL or L == NULL or b == NULL or u == NULL or wrow == NULL:
        free(G); free(L); free(b); free(u); free(wrow)
        raise MemoryError
    cdef bint used_ridge = False
    cdef Py_ssize_t i, j, a
    try:
        for i in range(n):
            for j in range(p):
                wrow[j] = W[i, j]
            if _solve_row(Y, V, wrow, i, p, k, rank_rtol, ridge_scale, G, L, b, u):
                used_ridge = True
            for a in range(k):
                U[i, a] = u[a]
    finally:
        free(G); free(L); free(b); free(u); free(wrow)
    return U_arr, used_ridge


def rows_irls(const double[:, ::1] Y, const double[:, ::1] V, const double[:, ::1] W0,
              double tau, int max_iter=60, double rank_rtol=1e-12,
              double ridge_scale=1e-10, U0=None):
    """Stabilized row-wise asymmetric least squares; see _kernels_py.rows_irls."""
    cdef Py_ssize_t n = Y.shape[0], p = Y.shape[1], k = V.shape[1]
    cdef const double[:, ::1] U0v = U0 if U0 is not None else None
    cdef bint has_entry = U0 is not None
    U_arr = np.empty((n, k))
    W_arr = np.empty((n, p))
    cdef double[:, ::1] U = U_arr
    cdef double[:, ::1] Wout = W_arr
    cdef double* G = <double*> malloc(k * k * sizeof(double))
    cdef double* L = <double*> malloc(k * k * sizeof(double))
    cdef double* b = <double*> malloc(k * sizeof(double))
    cdef double* u = <double*> malloc(k * sizeof(double))
    cdef double* ubest = <double*> malloc(k * sizeof(double))
    cdef double* wrow = <double*> malloc(p * sizeof(double))
    cdef double* wnew = <double*> malloc(p * sizeof(double))
    if (G == NULL or L == NULL or b == NULL or u == NULL or ubest == NULL
            or wrow == NULL or wnew == NULL):
        free(G); free(L); free(b); free(u); free(ubest); free(wrow); free(wnew)
        raise MemoryError
    cdef bint all_stable = True, used_ridge = False, row_stable
    cdef int iterations = 0, it
    cdef Py_ssize_t i, j, a, flips
    cdef double r, w, obj, best_obj, one_minus = 1.0 - tau
    try:
        for i in range(n):
            for j in range(p):
                wrow[j] = W0[i, j]
            best_obj = -1.0
            if has_entry:
                # entry iterate joins the candidate set
                best_obj = 0.0
                for a in range(k):
                    ubest[a] = U0v[i, a]
                for j in range(p):
                    r = Y[i, j]
                    for a in range(k):
                        r -= ubest[a] * V[j, a]
                    w = tau if r > 0.0 else one_minus
                    best_obj += w * r * r
            row_stable = False
            it = 0
            while it < max_iter:
                it += 1
                if _solve_row(Y, V, wrow, i, p, k, rank_rtol, ridge_scale,
                              G, L, b, u):
                    used_ridge = True
                obj = 0.0
                flips = 0
                for j in range(p):
                    r = Y[i, j]
                    for a in range(k):
                        r -= u[a] * V[j, a]
                    w = tau if r > 0.0 else one_minus
                    wnew[j] = w
                    obj += w * r * r
                    if wnew[j] != wrow[j]:
                        flips += 1
                if best_obj < 0.0 or obj < best_obj:
                    best_obj = obj
                    for a in range(k):
                        ubest[a] = u[a]
                if flips == 0:
                    row_stable = True
                    for a in range(k):
                        ubest[a] = u[a]
                    break
                for j in range(p):
                    wrow[j] = wnew[j]
            if it > iterations:
                iterations = it
            if not row_stable:
                all_stable = False
            for a in range(k):
                U[i, a] = ubest[a]
            for j in range(p):
                r = Y[i, j]
                for a in range(k):
                    r -= ubest[a] * V[j, a]
                Wout[i, j] = tau if r > 0.0 else one_minus
    finally:
        free(G); free(L); free(b); free(u); free(ubest); free(wrow); free(wnew)
    return U_arr, W_arr, iterations, all_stable, used_ridge
