"""Certified lower/upper bounds on nonnegative rank at desk scale.

Lower bounds come from flattening ranks and from the disjoint-slice-support
certificate; upper bounds come from explicit witnesses (certificate
constructions, trivial factorizations) or from feasibility searches with
``nncp_solve``. A feasibility upper bound is numerical evidence, so an
estimate is only marked certified when it meets a proof-backed lower bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .solvers import SolverConfig, nncp_solve
from .tensor import (Decomposition, RankOneTerm, Tensor, direct_sum, evaluate,
                     flatten, mode_slices)

MATRIX_CAP = 6
RANK_RTOL = 1e-9


@dataclass(frozen=True)
class RankEstimate:
    """Interval ``[lower, upper]`` for a nonnegative rank.

    ``upper is None`` means no witness was found up to ``r_max``.
    """

    lower: int
    upper: Optional[int]
    certified: bool
    evidence: tuple[str, ...] = ()
    r_max: Optional[int] = None
    witness: Optional[Decomposition] = field(default=None, repr=False,
                                             compare=False)

    def __post_init__(self):
        if self.upper is not None and self.upper < self.lower:
            raise ValueError(f"upper {self.upper} < lower {self.lower}")
        if self.certified and self.upper != self.lower:
            raise ValueError("certified estimate needs lower == upper")

    @property
    def value(self) -> Optional[int]:
        return self.lower if self.certified else None

    def contains(self, r: int) -> bool:
        return self.lower <= r and (self.upper is None or r <= self.upper)

    def to_dict(self) -> dict:
        upper = self.upper if self.upper is not None else f">{self.r_max}"
        return {"lower": self.lower, "upper": upper,
                "certified": self.certified, "evidence": list(self.evidence)}


def numerical_rank(M, rtol: float = RANK_RTOL) -> int:
    """Number of singular values above ``rtol * sigma_max``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def paper_222_tensor() -> Tensor:
    """The 2x2x2 tensor with slices I and antidiag(1, 1) along mode 3."""
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    terms = [(e1, e1, e1), (e2, e2, e1), (e1, e2, e2), (e2, e1, e2)]
    dec = Decomposition((2, 2, 2), tuple(RankOneTerm(t) for t in terms),
                        "nonnegative")
    return evaluate(dec)


def latin_square_tensor(n: int) -> Tensor:
    """Stack of cyclic permutation matrices: ``A[i, j, k] = 1`` iff ``j - i = k mod n``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    i, j, k = np.indices((n, n, n))
    arr = ((j - i) % n == k).astype(float)
    return Tensor((n, n, n), arr.reshape(-1), nonneg=True)


def _trivial_matrix_witness(M: np.ndarray) -> Decomposition:
    """``M = sum_j M[:, j] ⊗ e_j`` (or the row version), nonzero parts only."""
    rows, cols = M.shape
    terms = []
    if cols <= rows:
        for j in range(cols):
            if np.any(M[:, j]):
                e = np.zeros(cols)
                e[j] = 1.0
                terms.append(RankOneTerm([M[:, j], e]))
    else:
        for i in range(rows):
            if np.any(M[i]):
                e = np.zeros(rows)
                e[i] = 1.0
                terms.append(RankOneTerm([e, M[i]]))
    return Decomposition((rows, cols), tuple(terms), "nonnegative")


def _feasible(T: Tensor, r: int, cfg: SolverConfig):
    res = nncp_solve(T, r, cfg, diagnostics=False, stop_at_feasible=True)
    ok = res.residual <= cfg.feas_tol * T.norm()
    return ok, res


def nonneg_matrix_rank_small(M, cfg: SolverConfig = SolverConfig()) -> RankEstimate:
    """Nonnegative rank of a small nonnegative matrix.

    Lower bound: numerical rank. Upper bound: ``min(rows, cols)`` refined by
    feasibility search. Certified when the bounds meet, or when the rank is
    at most 2 (nonnegative rank equals rank there).
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("expected a matrix")
    if np.any(M < 0):
        raise ValueError("matrix must be nonnegative")
    if min(M.shape) > MATRIX_CAP:
        raise ValueError(f"min(rows, cols) = {min(M.shape)} exceeds the "
                         f"small-scale cap {MATRIX_CAP}")
    rows, cols = M.shape
    lower = numerical_rank(M)
    cap = min(rows, cols)
    ev = [f"lower {lower}: numerical rank (rtol {RANK_RTOL:g})"]
    if lower == 0:
        return RankEstimate(0, 0, True, tuple(ev + ["zero matrix"]), cap,
                            Decomposition((rows, cols), (), "nonnegative"))
    if lower == cap:
        ev.append(f"upper {cap}: trivial factorization by "
                  f"{'columns' if cols <= rows else 'rows'}")
        return RankEstimate(lower, lower, True, tuple(ev), cap,
                            _trivial_matrix_witness(M))
    T = Tensor((rows, cols), M.reshape(-1), True)
    for r in range(lower, cap):
        ok, res = _feasible(T, r, cfg)
        if ok:
            ev.append(f"upper {r}: nonnegative factorization with residual "
                      f"{res.residual:.3e}")
            return RankEstimate(lower, r, lower == r, tuple(ev), cap, res.best)
        if lower <= 2:
            # rank <= 2 nonnegative matrices have nonnegative rank = rank
            ev.append(f"upper {lower}: rank <= 2 implies nonnegative rank = "
                      "rank (search did not produce a witness)")
            return RankEstimate(lower, lower, True, tuple(ev), cap, None)
    ev.append(f"upper {cap}: trivial factorization")
    return RankEstimate(lower, cap, lower == cap, tuple(ev), cap,
                        _trivial_matrix_witness(M))


def _disjoint_supports(slices) -> bool:
    seen = None
    for s in slices:
        supp = s > 0
        if seen is None:
            seen = supp.copy()
            continue
        if np.any(seen & supp):
            return False
        seen |= supp
    return True


def _insert_basis(dec: Decomposition, shape, mode: int, k: int,
                  coef: float = 1.0) -> list[RankOneTerm]:
    e = np.zeros(shape[mode])
    e[k] = coef
    return [RankOneTerm(list(t.factors[:mode]) + [e] + list(t.factors[mode:]))
            for t in dec.terms]


def _certify_array(arr: np.ndarray, cfg: SolverConfig):
    """Certified nonnegative rank with a witness, or ``None``."""
    if arr.ndim == 1:
        if not np.any(arr):
            return 0, None
        return 1, None
    shape = arr.shape
    if not np.any(arr):
        return 0, Decomposition(shape, (), "nonnegative")
    if arr.ndim == 2 and min(shape) <= MATRIX_CAP:
        est = nonneg_matrix_rank_small(arr, cfg)
        if est.certified and est.witness is not None:
            return est.lower, est.witness
    T = Tensor(shape, arr.reshape(-1), True)
    for mode in range(arr.ndim):
        slices = mode_slices(T, mode)
        if not _disjoint_supports(slices):
            continue
        total, terms = 0, []
        for k, s in enumerate(slices):
            if s.ndim == 1:
                if np.any(s):
                    total += 1
                    e = np.zeros(shape[mode])
                    e[k] = 1.0
                    f = [s]
                    f.insert(mode, e)
                    terms.append(RankOneTerm(f))
                continue
            sub = _certify_array(s, cfg)
            if sub is None or (sub[0] > 0 and sub[1] is None):
                break
            total += sub[0]
            if sub[0]:
                terms.extend(_insert_basis(sub[1], shape, mode, k))
        else:
            return total, Decomposition(shape, tuple(terms), "nonnegative")
    return None


def disjoint_slice_certificate(A: Tensor,
                               cfg: SolverConfig = SolverConfig()) -> Optional[int]:
    """Exact nonnegative rank when some mode has pairwise disjoint slice supports.

    A nonnegative rank-one term whose factor in that mode has two nonzero
    entries would put a common nonzero position into two slices, so every
    term lives in a single slice and the rank is the sum of the slice ranks.
    Slice ranks are certified recursively with matrices as the base case.
    """
    if not A.nonneg:
        raise ValueError("certificate requires a nonnegative tensor")
    out = _certify_array(A.array, cfg)
    return None if out is None else out[0]


def flattening_lower_bound(A: Tensor) -> int:
    return max(numerical_rank(flatten(A, k)) for k in range(A.order))


def default_r_max(shape) -> int:
    """Product of all dimensions but the largest: a universal upper bound."""
    dims = sorted(shape)
    return int(np.prod(dims[:-1]))


def nonneg_rank_bounds(A: Tensor, r_max: Optional[int] = None,
                       cfg: SolverConfig = SolverConfig()) -> RankEstimate:
    """Lower/upper bounds on ``rank_+(A)``."""
    if not A.nonneg:
        raise ValueError("nonneg_rank_bounds requires a nonnegative tensor")
    if r_max is None:
        r_max = default_r_max(A.shape)
    norm = A.norm()
    if norm == 0:
        return RankEstimate(0, 0, True, ("zero tensor",), r_max,
                            Decomposition(A.shape, (), "nonnegative"))
    lower = flattening_lower_bound(A)
    ev = [f"lower {lower}: max flattening rank"]
    cert = _certify_array(A.array, cfg)
    if cert is not None:
        value, witness = cert
        ev.append(f"lower {value}: disjoint slice supports certificate")
        lower = max(lower, value)
        if witness is not None:
            wres = float(np.linalg.norm(A.data - evaluate(witness).data))
            if wres <= cfg.feas_tol * norm and witness.rank == value:
                ev.append(f"upper {value}: certificate witness "
                          f"(residual {wres:.3e})")
                return RankEstimate(lower, value, lower == value, tuple(ev),
                                    r_max, witness)
    for r in range(max(lower, 1), r_max + 1):
        ok, res = _feasible(A, r, cfg)
        if ok:
            ev.append(f"upper {r}: nncp_solve residual {res.residual:.3e} "
                      f"<= feas_tol*||A||")
            return RankEstimate(lower, r, lower == r, tuple(ev), r_max,
                                res.best)
    ev.append(f"upper: no feasible fit up to r_max = {r_max}")
    return RankEstimate(lower, None, False, tuple(ev), r_max)


def direct_sum_rank_check(A: Tensor, B: Tensor,
                          cfg: SolverConfig = SolverConfig()) -> dict:
    """Compare bounds of ``A ⊕ B`` with the sums of the bounds of A and B."""
    S = direct_sum(A, B)
    ba, bb, bs = (nonneg_rank_bounds(T, None, cfg) for T in (A, B, S))
    lo = ba.lower + bb.lower
    hi = (None if ba.upper is None or bb.upper is None
          else ba.upper + bb.upper)
    s_hi = bs.upper
    consistent = ((hi is None or bs.lower <= hi)
                  and (s_hi is None or lo <= s_hi))
    confirmed = (ba.certified and bb.certified and bs.certified
                 and bs.lower == ba.lower + bb.lower)
    return {"A": ba.to_dict(), "B": bb.to_dict(), "sum": bs.to_dict(),
            "shape_sum": list(S.shape),
            "additivity_consistent": bool(consistent),
            "additivity_confirmed": bool(confirmed)}


def maxrank_formula(shape) -> int:
    """Maximum nonnegative typical rank of an order-3 nonnegative tensor space."""
    if len(shape) != 3:
        raise ValueError("maxrank_formula is defined for order-3 shapes")
    m, n, p = sorted((int(s) for s in shape), reverse=True)
    if m == n:
        return n * p
    if n == p:
        return n * n
    return n * p
