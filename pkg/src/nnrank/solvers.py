"""Multi-start alternating solvers and first-order optimality checks.

``nncp_solve`` approximates the best nonnegative rank-r approximation by
alternating nonnegative least squares from many random starts;
``als_solve_real`` is the unconstrained counterpart. Neither certifies
global optimality: the spread of per-restart residuals is returned as
evidence instead.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import least_squares

from . import kernels
from .nnls import nnls  # noqa: F401  (re-exported)
from .tensor import Decomposition, Tensor, evaluate, ShapeError

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class SolverConfig:
    restarts: int = 10
    max_outer_iters: int = 2000
    inner_tol: float = 1e-12
    stall_tol: float = 1e-10
    seed: int = 0
    feas_tol: float = 1e-8
    revivals: int = 5
    polish_iters: int = 100000
    polish_stall_tol: float = 1e-15
    trf_nfev: int = 200

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if min(self.polish_iters, self.revivals, self.trf_nfev) < 0:
            raise ValueError("polish_iters, revivals and trf_nfev must be >= 0")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        for name in ("inner_tol", "stall_tol", "feas_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {"restarts": self.restarts,
                "max_outer_iters": self.max_outer_iters,
                "inner_tol": self.inner_tol, "stall_tol": self.stall_tol,
                "seed": self.seed, "feas_tol": self.feas_tol,
                "revivals": self.revivals,
                "polish_iters": self.polish_iters,
                "polish_stall_tol": self.polish_stall_tol,
                "trf_nfev": self.trf_nfev}


@dataclass(frozen=True)
class KktReport:
    """Worst-case first-order optimality residuals over terms and modes.

    ``per_term`` holds ``(violation, support_residual)`` for each term and
    mode. Directions are built from unit-normalized factors, so the values
    do not depend on the scaling gauge of the candidate.
    """

    max_inequality_violation: float
    max_support_equality_residual: float
    tangent_orthogonality: float
    eps_supp: float
    per_term: tuple = ()

    def max(self) -> float:
        return max(self.max_inequality_violation,
                   self.max_support_equality_residual,
                   self.tangent_orthogonality)

    def to_dict(self) -> dict:
        return {"max_inequality_violation": self.max_inequality_violation,
                "max_support_equality_residual":
                    self.max_support_equality_residual,
                "tangent_orthogonality": self.tangent_orthogonality,
                "eps_supp": self.eps_supp,
                "per_term": [[list(m) for m in t] for t in self.per_term]}


@dataclass(frozen=True)
class ApproximationResult:
    input_norm: float
    best: Decomposition
    residual: float
    restart_residuals: tuple[float, ...]
    kkt: Optional[KktReport] = None
    boundary: object = None
    best_index: int = 0
    histories: tuple = field(default=(), repr=False)
    restart_decompositions: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        out = {"input_norm": self.input_norm, "residual": self.residual,
               "best_index": self.best_index,
               "restart_residuals": list(self.restart_residuals),
               "best": self.best.to_dict()}
        if self.kkt is not None:
            out["kkt"] = self.kkt.to_dict()
        if self.boundary is not None:
            out["boundary"] = self.boundary.to_dict()
        return out


def restart_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for restart ``index`` of a run seeded by ``seed``."""
    return np.random.default_rng([int(seed) & SEED_MASK, int(index)])


def _split(F, dims):
    offs = np.concatenate([[0], np.cumsum(dims)])
    return [F[offs[k]:offs[k + 1]].copy() for k in range(len(dims))]


def _initial_factors(rng, dims, r, target_norm, nonneg):
    rows = int(sum(dims))
    F = rng.random((rows, r)) if nonneg else rng.standard_normal((rows, r))
    if target_norm == 0:
        return np.zeros_like(F)
    model = Decomposition.from_factor_matrices(_split(F, dims))
    mnorm = evaluate(model).norm()
    if mnorm > 0:
        F *= (target_norm / mnorm) ** (1.0 / len(dims))
    return F


def _revive(A: Tensor, F: np.ndarray, dims) -> bool:
    """Re-seed dead terms (a zero factor column) on the largest residual entries.

    Each revived term is a scaled coordinate spike at the current largest
    positive residual entry, which strictly lowers the residual. Returns
    False when nothing can be revived.
    """
    offs = np.concatenate([[0], np.cumsum(dims)])
    blocks = [F[offs[k]:offs[k + 1]] for k in range(len(dims))]
    dead = [q for q in range(F.shape[1])
            if any(not np.any(b[:, q]) for b in blocks)]
    if not dead:
        return False
    model = Decomposition.from_factor_matrices([b.copy() for b in blocks])
    R = (A.data - evaluate(model).data).reshape(dims)
    revived = False
    for q in dead:
        idx = np.unravel_index(int(np.argmax(R)), dims)
        top = R[idx]
        if not top > 0:
            break
        c = top ** (1.0 / len(dims))
        for b, i in zip(blocks, idx):
            b[:, q] = 0.0
            b[i, q] = c
        R[idx] = 0.0
        revived = True
    return revived


def _jacobian(mats) -> np.ndarray:
    """Jacobian of the evaluation map w.r.t. the stacked factor entries."""
    d = len(mats)
    letters = "abcdefghijklmnopqrstuvwxy"[:d]
    n = int(np.prod([m.shape[0] for m in mats]))
    blocks = []
    for k in range(d):
        ops, subs = [], []
        for j, m in enumerate(mats):
            if j == k:
                ops.append(np.eye(m.shape[0]))
                subs.append(letters[j] + "A")
            else:
                ops.append(m)
                subs.append(letters[j] + "Z")
        spec = ",".join(subs) + "->" + letters + "AZ"
        blocks.append(np.einsum(spec, *ops).reshape(n, -1))
    return np.hstack(blocks)


def _trf_polish(A: Tensor, F: np.ndarray, dims, nonneg: bool,
                max_nfev: int) -> bool:
    """Bound-constrained trust-region refinement of ``F`` in place.

    Alternating sweeps crawl through ill-conditioned valleys ("swamps");
    a joint Gauss-Newton type step does not. ``F`` is only overwritten
    when the residual strictly improves.
    """
    offs = np.concatenate([[0], np.cumsum(dims)])
    x0 = F.reshape(-1).copy()
    X = A.data

    def unpack(x):
        G = x.reshape(F.shape)
        return [G[offs[k]:offs[k + 1]] for k in range(len(dims))]

    def fun(x):
        model = Decomposition.from_factor_matrices(unpack(x))
        return evaluate(model).data - X

    def jac(x):
        # block columns follow the row-major (row, term) layout of F
        return _jacobian(unpack(x))

    before = float(np.linalg.norm(fun(x0)))
    bounds = (0.0, np.inf) if nonneg else (-np.inf, np.inf)
    try:
        sol = least_squares(fun, x0, jac=jac, bounds=bounds, method="trf",
                            xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=max_nfev)
    except (ValueError, np.linalg.LinAlgError):
        return False
    x = sol.x
    if nonneg:
        x = np.maximum(x, 0.0)
    if not np.all(np.isfinite(x)):
        return False
    if float(np.linalg.norm(fun(x))) < before:
        F[:] = x.reshape(F.shape)
        return True
    return False


def _polish(A: Tensor, F: np.ndarray, dims, nonneg: bool, cfg: SolverConfig,
            target: float) -> np.ndarray:
    """Refine a finished restart; returns the residuals it went through."""
    out = []
    if cfg.trf_nfev and _trf_polish(A, F, dims, nonneg, cfg.trf_nfev):
        out.append(_residual(A, F, dims))
    if cfg.polish_iters and (not out or out[-1] > target):
        # keep sweeping with a much tighter stall rule
        more = kernels.cp_run(A.data, F, dims, nonneg, cfg.polish_iters,
                              cfg.polish_stall_tol, target, cfg.inner_tol)
        if nonneg:
            np.maximum(F, 0.0, out=F)
        out.extend(more[1:])
    return np.asarray(out)


def _residual(A: Tensor, F: np.ndarray, dims) -> float:
    dec = Decomposition.from_factor_matrices(_split(F, dims))
    return float(np.linalg.norm(A.data - evaluate(dec).data))


def _descend(A: Tensor, F: np.ndarray, dims, nonneg: bool, cfg: SolverConfig,
             target: float) -> np.ndarray:
    """One restart: alternating sweeps plus dead-term revivals."""
    hist = kernels.cp_run(A.data, F, dims, nonneg, cfg.max_outer_iters,
                          cfg.stall_tol, target, cfg.inner_tol)
    if nonneg:
        np.maximum(F, 0.0, out=F)
        for _ in range(cfg.revivals):
            if hist[-1] <= target or not _revive(A, F, dims):
                break
            more = kernels.cp_run(A.data, F, dims, True, cfg.max_outer_iters,
                                  cfg.stall_tol, target, cfg.inner_tol)
            np.maximum(F, 0.0, out=F)
            hist = np.concatenate([hist, more])
    return hist


def _multistart(A: Tensor, r: int, cfg: SolverConfig, nonneg: bool,
                stop_at_feasible: bool, keep_all: bool):
    if r < 1:
        raise ValueError(f"rank must be >= 1, got {r}")
    dims = A.shape
    norm = A.norm()
    target = cfg.feas_tol * norm if stop_at_feasible else 0.0
    mode = "nonnegative" if nonneg else "real"
    runs = []
    for idx in range(cfg.restarts):
        F = _initial_factors(restart_rng(cfg.seed, idx), dims, r, norm, nonneg)
        hist = _descend(A, F, dims, nonneg, cfg, target)
        if keep_all and hist[-1] > target:
            hist = np.concatenate([hist, _polish(A, F, dims, nonneg, cfg,
                                                 target)])
        if not np.all(np.isfinite(F)):
            raise FloatingPointError("non-finite factor entries encountered")
        runs.append([_residual(A, F, dims), F, hist])
        if stop_at_feasible and runs[-1][0] <= cfg.feas_tol * norm:
            break
    idx = min(range(len(runs)), key=lambda i: (runs[i][0], i))
    if not keep_all and runs[idx][0] > target:
        res, F, hist = runs[idx]
        G = F.copy()
        more = _polish(A, G, dims, nonneg, cfg, target)
        if not np.all(np.isfinite(G)):
            raise FloatingPointError("non-finite factor entries encountered")
        pres = _residual(A, G, dims)
        if pres <= res:
            runs[idx] = [pres, G, np.concatenate([hist, more])]
    chosen = range(len(runs)) if keep_all else [idx]
    decs = {i: Decomposition.from_factor_matrices(_split(runs[i][1], dims),
                                                  mode) for i in chosen}
    best = (runs[idx][0], idx, decs[idx])
    residuals = [rr[0] for rr in runs]
    histories = [rr[2] for rr in runs]
    return (norm, best, residuals, histories,
            [decs[i] for i in range(len(runs))] if keep_all else [])


def nncp_solve(A: Tensor, r: int, cfg: SolverConfig = SolverConfig(), *,
               eps_supp: float = 1e-7, diagnostics: bool = True,
               stop_at_feasible: bool = False,
               keep_all: bool = False) -> ApproximationResult:
    """Best nonnegative rank-``r`` approximation by multi-start ANLS.

    Starts have i.i.d. uniform(0, 1) factor entries rescaled so the initial
    model has the norm of ``A``. Each restart sweeps until the relative
    residual decrease drops below ``cfg.stall_tol`` or ``cfg.max_outer_iters``
    is reached. The lowest residual wins; ties go to the lowest restart
    index.

    With ``stop_at_feasible`` the run stops as soon as a restart reaches
    ``cfg.feas_tol * ||A||`` (feasibility search mode).
    """
    if not A.nonneg:
        raise ValueError("nncp_solve requires a tensor flagged nonneg")
    norm, (res, idx, dec), residuals, hists, decs = _multistart(
        A, r, cfg, True, stop_at_feasible, keep_all)
    kkt = boundary = None
    if diagnostics:
        from .cells import support_pattern
        kkt = kkt_residuals(A, dec, eps_supp)
        boundary = support_pattern(dec, eps_supp)
    return ApproximationResult(norm, dec, res, tuple(residuals), kkt,
                               boundary, idx, tuple(hists), tuple(decs))


def als_solve_real(A: Tensor, r: int, cfg: SolverConfig = SolverConfig(), *,
                   stop_at_feasible: bool = False,
                   keep_all: bool = False) -> ApproximationResult:
    """Best real rank-``r`` approximation by multi-start ALS (Gaussian starts)."""
    norm, (res, idx, dec), residuals, hists, decs = _multistart(
        A, r, cfg, False, stop_at_feasible, keep_all)
    return ApproximationResult(norm, dec, res, tuple(residuals), None, None,
                               idx, tuple(hists), tuple(decs))


def _contract_except(R: np.ndarray, factors, k: int) -> np.ndarray:
    """Contract ``R`` with every factor except mode ``k``."""
    out = R
    for j in reversed(range(len(factors))):
        if j == k:
            continue
        out = np.tensordot(out, factors[j], axes=([j], [0]))
    return out


def _support(f: np.ndarray, eps_supp: float) -> np.ndarray:
    top = f.max(initial=0.0)
    return f > eps_supp * top if top > 0 else np.zeros(f.size, dtype=bool)


def tangent_vectors(decomp: Decomposition, eps_supp: float = 1e-7,
                    restrict: bool = True) -> np.ndarray:
    """Spanning set of the (support-restricted) tangent space, as columns.

    For each term and mode, and each coordinate ``a`` (inside the factor's
    numerical support when ``restrict``), the column is the flattened term
    with that mode's factor replaced by ``e_a``.
    """
    cols = []
    for term in decomp.terms:
        for k, f in enumerate(term.factors):
            allowed = (_support(f, eps_supp) if restrict
                       else np.ones(f.size, dtype=bool))
            for a in np.flatnonzero(allowed):
                e = np.zeros(f.size)
                e[a] = 1.0
                fs = list(term.factors)
                fs[k] = e
                out = fs[0]
                for g in fs[1:]:
                    out = np.multiply.outer(out, g)
                cols.append(out.reshape(-1))
    if not cols:
        return np.zeros((int(np.prod(decomp.shape)), 0))
    return np.column_stack(cols)


def kkt_residuals(A: Tensor, candidate: Decomposition,
                  eps_supp: float = 1e-7) -> KktReport:
    """First-order optimality residuals of ``candidate`` as a projection of ``A``.

    With ``p = A`` and ``q = evaluate(candidate)``, for each term and mode
    the vector ``g[a] = <q - p, e_a ⊗ (other unit factors)>`` must be
    ``>= 0`` everywhere and ``0`` on the factor's support. The tangent
    value is the norm of the orthogonal projection of ``p - q`` onto the
    span of the support-restricted tangent vectors.
    """
    if candidate.mode != "nonnegative":
        raise ValueError("kkt_residuals requires a nonnegative decomposition")
    if candidate.shape != A.shape:
        raise ShapeError(f"shape mismatch: {candidate.shape} vs {A.shape}")
    R = (evaluate(candidate).data - A.data).reshape(A.shape)
    worst_ineq = worst_supp = 0.0
    per_term = []
    for term in candidate.terms:
        norms = [np.linalg.norm(f) for f in term.factors]
        rows = []
        if min(norms) == 0:
            per_term.append(tuple((0.0, 0.0) for _ in term.factors))
            continue
        units = [f / n for f, n in zip(term.factors, norms)]
        for k, f in enumerate(term.factors):
            g = _contract_except(R, units, k)
            viol = max(0.0, -float(g.min()))
            supp = _support(f, eps_supp)
            sres = float(np.abs(g[supp]).max()) if supp.any() else 0.0
            rows.append((viol, sres))
            worst_ineq = max(worst_ineq, viol)
            worst_supp = max(worst_supp, sres)
        per_term.append(tuple(rows))
    tangent = 0.0
    if np.any(R):
        T = tangent_vectors(candidate, eps_supp)
        if T.shape[1]:
            U, s, _ = np.linalg.svd(T, full_matrices=False)
            keep = s > 1e-10 * s[0] if s.size and s[0] > 0 else s > 0
            proj = U[:, keep].T @ R.reshape(-1)
            tangent = float(np.linalg.norm(proj))
    return KktReport(worst_ineq, worst_supp, tangent, eps_supp,
                     tuple(per_term))
