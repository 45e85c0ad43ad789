# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled alternating sweep kernel.

Same algorithm as ``_fallback.py``: exact block minimization per mode, with
Gram-form Lawson-Hanson NNLS per factor row in nonnegative mode and a
Cholesky (min-norm SVD fallback) solve in real mode.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs, dgelss

cnp.import_array()

cdef double RCOND = 1e-13


cdef int solve_spd(double[:, ::1] G, int n, double* rhs, double* out,
                   double[::1] work_a, double[::1] work_s,
                   double[::1] work_l) noexcept nogil:
    """Solve G[:n,:n] z = rhs; min-norm least squares when ill-conditioned."""
    cdef int i, j, info = 0, nrhs = 1, lda = n, rank = 0, lwork
    cdef char uplo = b'L'
    cdef double dmin, dmax, rc = RCOND
    if n == 0:
        return 0
    for i in range(n):
        for j in range(n):
            work_a[i * n + j] = G[i, j]
        out[i] = rhs[i]
    dpotrf(&uplo, &n, &work_a[0], &lda, &info)
    if info == 0:
        dmin = fabs(work_a[0])
        dmax = dmin
        for i in range(1, n):
            if fabs(work_a[i * n + i]) < dmin:
                dmin = fabs(work_a[i * n + i])
            if fabs(work_a[i * n + i]) > dmax:
                dmax = fabs(work_a[i * n + i])
        if dmin > sqrt(RCOND) * dmax:
            dpotrs(&uplo, &n, &nrhs, &work_a[0], &lda, out, &lda, &info)
            if info == 0:
                return 0
    for i in range(n):
        for j in range(n):
            work_a[i * n + j] = G[i, j]
        out[i] = rhs[i]
    lwork = work_l.shape[0]
    dgelss(&n, &n, &nrhs, &work_a[0], &lda, out, &lda, &work_s[0], &rc,
           &rank, &work_l[0], &lwork, &info)
    return info


cdef void nnls_gram(double[:, ::1] G, double* m, int r, double tol,
                    double* x, double[::1] z, double[::1] w,
                    int[::1] passive, int[::1] idx,
                    double[:, ::1] Gs, double[::1] ms, double[::1] zs,
                    double[::1] work_a, double[::1] work_s,
                    double[::1] work_l) noexcept nogil:
    cdef int i, j, jj, np_, outer, inner, max_iter = 3 * r + 10
    cdef double scale = 0.0, thr, best, alpha, a, s
    cdef bint allpos
    for i in range(r):
        if fabs(m[i]) > scale:
            scale = fabs(m[i])
        for j in range(r):
            if fabs(G[i, j]) > scale:
                scale = fabs(G[i, j])
    thr = tol * (scale + 1e-300)
    for i in range(r):
        x[i] = 0.0
        passive[i] = 0
        w[i] = m[i]
    for outer in range(max_iter):
        jj = -1
        best = thr
        for i in range(r):
            if not passive[i] and w[i] > best:
                best = w[i]
                jj = i
        if jj < 0:
            break
        passive[jj] = 1
        for inner in range(max_iter):
            np_ = 0
            for i in range(r):
                if passive[i]:
                    idx[np_] = i
                    np_ += 1
            for i in range(np_):
                ms[i] = m[idx[i]]
                for j in range(np_):
                    Gs[i, j] = G[idx[i], idx[j]]
            solve_spd(Gs, np_, &ms[0], &zs[0], work_a, work_s, work_l)
            for i in range(r):
                z[i] = 0.0
            allpos = True
            for i in range(np_):
                z[idx[i]] = zs[i]
                if zs[i] <= 0:
                    allpos = False
            if allpos:
                for i in range(r):
                    x[i] = z[i]
                break
            alpha = 1e300
            jj = -1
            for i in range(np_):
                j = idx[i]
                if z[j] <= 0:
                    a = x[j] / (x[j] - z[j])
                    if a < alpha:
                        alpha = a
                        jj = j
            for i in range(r):
                x[i] = x[i] + alpha * (z[i] - x[i])
            # the blocking coordinate lands on zero exactly, not a rounding crumb
            x[jj] = 0.0
            for i in range(r):
                if passive[i] and not (x[i] > 0):
                    passive[i] = 0
                if not passive[i]:
                    x[i] = 0.0
        for i in range(r):
            s = m[i]
            for j in range(r):
                s -= G[i, j] * x[j]
            w[i] = s


cdef double residual(const double[::1] X, double[:, ::1] F, long[:, ::1] rows,
                     int d, int r) noexcept nogil:
    cdef Py_ssize_t t, P = X.shape[0]
    cdef int q, j
    cdef double s, p, diff, acc = 0.0
    for t in range(P):
        s = 0.0
        for q in range(r):
            p = 1.0
            for j in range(d):
                p *= F[rows[j, t], q]
            s += p
        diff = X[t] - s
        acc += diff * diff
    return sqrt(acc)


def cp_run(X, F, dims, bint nonneg, int max_iters, double stall_tol,
           double target, double inner_tol):
    """Alternating sweeps in place on the stacked factor array ``F``.

    Returns the residual history (initial residual first). A sweep that
    would raise the residual is undone and ends the run.
    """
    dims = tuple(int(n) for n in dims)
    cdef int d = len(dims)
    cdef const double[::1] Xv = np.ascontiguousarray(X, dtype=np.float64).reshape(-1)
    cdef double[:, ::1] Fv = F
    cdef int r = Fv.shape[1]
    cdef Py_ssize_t P = Xv.shape[0]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(np.int64)
    # rows[j, t] = row of F holding mode-j factor entry for flat index t
    cdef long[:, ::1] rows = np.ascontiguousarray(
        np.array(np.unravel_index(np.arange(P), dims), dtype=np.int64)
        + offs[:d, None], dtype=np.int64)
    cdef long[::1] offv = offs
    cdef double[:, ::1] G = np.empty((r, r))
    cdef double[:, ::1] M = np.empty((int(max(dims)), r))
    cdef double[::1] z = np.empty(r), w = np.empty(r), ms = np.empty(r)
    cdef double[::1] zs = np.empty(r), work_s = np.empty(r)
    cdef double[::1] work_l = np.empty(max(64, 8 * r + 64))
    cdef double[:, ::1] Gs = np.empty((r, r))
    cdef double[:, ::1] Fsave = np.empty_like(F)
    cdef double[::1] work_a = np.empty(r * r)
    cdef int[::1] passive = np.empty(r, dtype=np.intc)
    cdef int[::1] idx = np.empty(r, dtype=np.intc)
    cdef double[::1] xrow = np.empty(r)
    hist_arr = np.empty(max_iters + 1)
    cdef double[::1] hist = hist_arr
    cdef int it, k, j, q, q2, i, nk, ok, count = 1
    cdef Py_ssize_t t, a
    cdef double prev, cur, p, xval, s
    hist[0] = residual(Xv, Fv, rows, d, r)
    with nogil:
        for it in range(max_iters):
            prev = hist[count - 1]
            if prev <= target:
                break
            for a in range(Fv.shape[0]):
                for q in range(r):
                    Fsave[a, q] = Fv[a, q]
            for k in range(d):
                nk = offv[k + 1] - offv[k]
                # Gram: Hadamard product of F_j' F_j over j != k
                for q in range(r):
                    for q2 in range(r):
                        G[q, q2] = 1.0
                for j in range(d):
                    if j == k:
                        continue
                    for q in range(r):
                        for q2 in range(q, r):
                            s = 0.0
                            for a in range(offv[j], offv[j + 1]):
                                s += Fv[a, q] * Fv[a, q2]
                            G[q, q2] *= s
                for q in range(r):
                    for q2 in range(q):
                        G[q, q2] = G[q2, q]
                # MTTKRP
                for i in range(nk):
                    for q in range(r):
                        M[i, q] = 0.0
                for t in range(P):
                    xval = Xv[t]
                    if xval == 0.0:
                        continue
                    i = rows[k, t] - offv[k]
                    for q in range(r):
                        p = xval
                        for j in range(d):
                            if j != k:
                                p *= Fv[rows[j, t], q]
                        M[i, q] += p
                for i in range(nk):
                    if nonneg:
                        nnls_gram(G, &M[i, 0], r, inner_tol, &xrow[0], z, w,
                                  passive, idx, Gs, ms, zs, work_a, work_s,
                                  work_l)
                    else:
                        ok = solve_spd(G, r, &M[i, 0], &xrow[0], work_a,
                                       work_s, work_l)
                    for q in range(r):
                        Fv[offv[k] + i, q] = xrow[q]
            cur = residual(Xv, Fv, rows, d, r)
            if cur > prev:
                # inexact inner solves can lose a little near a fit; undo and stop
                for a in range(Fv.shape[0]):
                    for q in range(r):
                        Fv[a, q] = Fsave[a, q]
                break
            hist[count] = cur
            count += 1
            if prev - cur < stall_tol * prev:
                break
    return hist_arr[:count].copy()
