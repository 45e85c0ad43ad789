"""Pure numpy implementation of the alternating sweep kernel.

Mirrors ``_kernels.pyx`` step for step; selected when the compiled
extension is unavailable or ``NNRANK_PURE=1``.
"""
import numpy as np

from .nnls import nnls_gram, solve_spd


def _split(F, dims):
    offs = np.concatenate([[0], np.cumsum(dims)])
    return [F[offs[k]:offs[k + 1]] for k in range(len(dims))]


def _model(mats):
    r = mats[0].shape[1]
    out = np.zeros(tuple(m.shape[0] for m in mats))
    for q in range(r):
        t = mats[0][:, q]
        for m in mats[1:]:
            t = np.multiply.outer(t, m[:, q])
        out += t
    return out


def residual(X, F, dims):
    diff = X - _model(_split(F, dims)).reshape(-1)
    return float(np.sqrt(np.dot(diff, diff)))


def _khatri_rao(mats):
    r = mats[0].shape[1]
    out = mats[0]
    for m in mats[1:]:
        out = (out[:, None, :] * m[None, :, :]).reshape(-1, r)
    return out


def update_mode(Xarr, mats, k, nonneg, inner_tol):
    r = mats[0].shape[1]
    others = [m for j, m in enumerate(mats) if j != k]
    G = np.ones((r, r))
    for m in others:
        G *= m.T @ m
    unf = np.moveaxis(Xarr, k, 0).reshape(Xarr.shape[k], -1)
    M = unf @ _khatri_rao(others)
    A = mats[k]
    for i in range(A.shape[0]):
        if nonneg:
            A[i] = nnls_gram(G, M[i], tol=inner_tol)
        else:
            A[i] = solve_spd(G, M[i])


def cp_run(X, F, dims, nonneg, max_iters, stall_tol, target, inner_tol):
    """Run alternating sweeps in place on the stacked factor array ``F``.

    Returns the residual history (initial residual first). A sweep that
    would raise the residual is undone and ends the run.
    """
    dims = tuple(int(n) for n in dims)
    Xarr = np.asarray(X, dtype=float).reshape(dims)
    X = Xarr.reshape(-1)
    mats = _split(F, dims)
    hist = [residual(X, F, dims)]
    for _ in range(max_iters):
        prev = hist[-1]
        if prev <= target:
            break
        saved = F.copy()
        for k in range(len(dims)):
            update_mode(Xarr, mats, k, nonneg, inner_tol)
        cur = residual(X, F, dims)
        if cur > prev:
            # inexact inner solves can lose a little near a fit; undo and stop
            F[:] = saved
            break
        hist.append(cur)
        if prev - cur < stall_tol * prev:
            break
    return np.asarray(hist)
