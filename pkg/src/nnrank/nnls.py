"""Nonnegative least squares by the Lawson-Hanson active-set method.

The solver works on the normal equations (Gram form): minimize
``0.5 x'Gx - m'x`` over ``x >= 0``. This is the form used inside the
alternating solvers, where ``G`` is a small Hadamard product of Gram
matrices and many right-hand sides share it.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

RCOND = 1e-13


def solve_spd(G: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Solve ``G z = m`` for symmetric PSD ``G``; min-norm if singular."""
    try:
        c = cho_factor(G, lower=True, check_finite=False)
        d = np.abs(np.diag(c[0]))
        if d.min() > np.sqrt(RCOND) * d.max():
            return cho_solve(c, m, check_finite=False)
    except LinAlgError:
        pass
    return np.linalg.lstsq(G, m, rcond=RCOND)[0]


def nnls_gram(G: np.ndarray, m: np.ndarray, tol: float = 1e-12,
              max_iter: int | None = None) -> np.ndarray:
    """Active-set NNLS in Gram form.

    Parameters
    ----------
    G : ndarray, shape (r, r)
        Symmetric positive semidefinite matrix.
    m : ndarray, shape (r,)
        Linear term.
    tol : float
        Relative tolerance on the dual variables ``w = m - Gx``; a free
        coordinate enters the passive set only if ``w_j > tol * scale``.

    Returns
    -------
    x : ndarray, shape (r,)
    """
    r = m.shape[0]
    if max_iter is None:
        max_iter = 3 * r + 10
    scale = max(np.abs(m).max(initial=0.0),
                np.abs(G).max(initial=0.0)) + 1e-300
    thr = tol * scale
    x = np.zeros(r)
    passive = np.zeros(r, dtype=bool)
    w = m.copy()
    for _ in range(max_iter):
        cand = np.where(passive, -np.inf, w)
        j = int(np.argmax(cand))
        if cand[j] <= thr:
            break
        passive[j] = True
        for _ in range(max_iter):
            idx = np.flatnonzero(passive)
            z = np.zeros(r)
            z[idx] = solve_spd(G[np.ix_(idx, idx)], m[idx])
            if np.all(z[idx] > 0):
                x = z
                break
            bad = idx[z[idx] <= 0]
            ratios = x[bad] / (x[bad] - z[bad])
            alpha = ratios.min()
            x = x + alpha * (z - x)
            # the blocking coordinate lands on zero exactly, not a rounding crumb
            x[bad[np.argmin(ratios)]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
        w = m - G @ x
    return x


def nnls(M, b, inner_tol: float = 1e-12) -> np.ndarray:
    """Nonnegative least squares ``min ||Mx - b||`` subject to ``x >= 0``."""
    M = np.asarray(M, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    if M.ndim != 2 or M.shape[0] != b.size:
        raise ValueError(f"dimension mismatch: M {M.shape}, b {b.shape}")
    return nnls_gram(M.T @ M, M.T @ b, tol=inner_tol)


def nnls_certificate(M, b, x) -> tuple[float, float]:
    """Return ``(min gradient on active set, max |gradient| on free set)``.

    The gradient is ``M'(Mx - b)``. At an exact solution the first value is
    ``>= 0`` and the second is ``0``.
    """
    M = np.asarray(M, dtype=float)
    g = M.T @ (M @ x - np.asarray(b, dtype=float))
    active = x <= 0
    lo = float(g[active].min()) if active.any() else 0.0
    hi = float(np.abs(g[~active]).max()) if (~active).any() else 0.0
    return lo, hi
