"""Identifiability and defectivity of tensor spaces, and empirical uniqueness.

Closed-form sufficient conditions, the known exception lists, a randomized
Terracini (Jacobian rank) test of secant dimensions, and a restart
clustering test for the uniqueness of a specific tensor's decomposition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .cells import distinct_cells_witness
from .solvers import SolverConfig, nncp_solve, restart_rng, tangent_vectors
from .tensor import (Decomposition, Tensor, canonicalize, check_shape,
                     match_decompositions)

IDENTIFIABLE = "identifiable"
NOT_IDENTIFIABLE = "not_identifiable"
DEFECTIVE = "defective"
INCONCLUSIVE = "inconclusive"

JACOBIAN_RTOL = 1e-9
TABLE_MAX_PRODUCT = 15000
SYMMETRIC_EXCEPTIONS = frozenset({(6, 2, 9), (4, 3, 8), (3, 5, 9)})


def expected_generic_rank(shape) -> int:
    """``ceil(prod(n) / (1 + sum(n - 1)))`` in exact integer arithmetic."""
    shape = check_shape(shape)
    num = math.prod(shape)
    den = 1 + sum(n - 1 for n in shape)
    return -(-num // den)


def expected_dim(shape, r: int) -> int:
    shape = tuple(shape)
    return min(r * (sum(shape) - len(shape) + 1), math.prod(shape))


class JacobianRank(NamedTuple):
    rank: int
    gap: tuple[float, float]  # (last kept, first dropped) normalized singular values


def _jacobian_trial(shape, r, rng) -> JacobianRank:
    mats = [rng.standard_normal((n, r)) for n in shape]
    J = tangent_vectors(Decomposition.from_factor_matrices(mats), restrict=False)
    s = np.linalg.svd(J, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return JacobianRank(0, (0.0, 0.0))
    s = s / s[0]
    rank = int(np.sum(s > JACOBIAN_RTOL))
    kept = float(s[rank - 1]) if rank else 0.0
    dropped = float(s[rank]) if rank < s.size else 0.0
    return JacobianRank(rank, (kept, dropped))


def terracini_details(shape, r: int, seed: int = 0,
                      trials: int = 3) -> JacobianRank:
    """Max Jacobian rank over ``trials`` Gaussian factor tuples, with its gap."""
    shape = check_shape(shape)
    if r < 1:
        raise ValueError("r must be >= 1")
    best = None
    for t in range(trials):
        jr = _jacobian_trial(shape, r, restart_rng(seed, t))
        if best is None or jr.rank > best.rank:
            best = jr
    return best


def terracini_rank(shape, r: int, seed: int = 0) -> int:
    """Numerical rank of the Jacobian of the r-term evaluation map.

    Evaluated at i.i.d. standard normal factors; max over 3 seeded trials.
    """
    return terracini_details(shape, r, seed).rank


class Defectivity(NamedTuple):
    defective: bool
    jacobian_rank: int
    expected_dim: int
    gap: tuple[float, float]


def is_defective(shape, r: int, seed: int = 0) -> Defectivity:
    """Jacobian rank below ``min(r * (sum(n) - d + 1), prod(n))``?"""
    jr = terracini_details(shape, r, seed)
    exp = expected_dim(shape, r)
    return Defectivity(jr.rank < exp, jr.rank, exp, jr.gap)


@dataclass(frozen=True)
class GenericRankReport:
    shape: tuple[int, ...]
    r_g_estimate: int
    expected_r_g: int
    per_r_jacobian_ranks: tuple[int, ...]

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "r_g_estimate": self.r_g_estimate,
                "expected_r_g": self.expected_r_g,
                "per_r_jacobian_ranks": list(self.per_r_jacobian_ranks)}


def generic_rank_estimate(shape, seed: int = 0) -> GenericRankReport:
    """Smallest r whose Jacobian rank fills the ambient space."""
    shape = check_shape(shape)
    ambient = math.prod(shape)
    if ambient > 10**5:
        raise ValueError(f"ambient dimension {ambient} exceeds 1e5")
    ranks = []
    r = 0
    while True:
        r += 1
        ranks.append(terracini_rank(shape, r, seed))
        if ranks[-1] >= ambient:
            break
    return GenericRankReport(shape, r, expected_generic_rank(shape),
                             tuple(ranks))


def chiantini_ottaviani(shape, r: int) -> bool:
    """Sufficient identifiability bound ``r <= 2**(a + b - 2)``.

    ``a``, ``b`` are the largest integers with ``2**a <= n1`` and
    ``2**b <= n2`` for the two smallest dimensions.
    """
    if len(shape) != 3:
        raise ValueError("order-3 shapes only")
    n1, n2, _ = sorted(int(n) for n in shape)
    a, b = n1.bit_length() - 1, n2.bit_length() - 1
    return 4 * r <= 2 ** (a + b)


def domanov_delathauwer(shape, r: int) -> bool:
    """``2 <= m <= n <= p <= r`` and ``2r <= m + n + 2p - 2 - sqrt((m-n)^2 + 4p)``."""
    if len(shape) != 3:
        raise ValueError("order-3 shapes only")
    m, n, p = sorted(int(s) for s in shape)
    if not (2 <= m and p <= r):
        return False
    lhs = 2 * r
    s = m + n + 2 * p - 2
    disc = (m - n) ** 2 + 4 * p
    rhs = s - math.sqrt(disc)
    if abs(lhs - rhs) > 1e-9:
        return lhs <= rhs
    # near equality: sqrt(disc) <= s - 2r exactly
    slack = s - lhs
    return slack >= 0 and disc <= slack * slack


def _unbalanced_bound(dims_desc) -> int:
    rest = dims_desc[1:]
    return math.prod(rest) - sum(n - 1 for n in rest)


def exception_tables(shape, r: int) -> tuple[str, str]:
    """Verdict from the known exception tables; returns ``(verdict, reason)``.

    Rows known to be defective give ``defective``; the other listed rows give
    ``not_identifiable``. Outside the table, ``r < r0`` with product at most
    15000 gives ``identifiable``; anything else is ``inconclusive``.
    """
    dims = tuple(sorted((int(n) for n in check_shape(shape)), reverse=True))
    d = len(dims)
    if d == 3 and dims == (4, 4, 3) and r == 5:
        return DEFECTIVE, "row (4,4,3), r=5"
    if d == 4 and dims[0] == dims[1] and dims[2:] == (2, 2) \
            and r == 2 * dims[0] - 1:
        return DEFECTIVE, f"row (n,n,2,2), r=2n-1 with n={dims[0]}"
    if dims == (4, 4, 4) and r == 6:
        return NOT_IDENTIFIABLE, "row (4,4,4), r=6"
    if dims == (6, 6, 3) and r == 8:
        return NOT_IDENTIFIABLE, "row (6,6,3), r=8"
    if dims == (2, 2, 2, 2, 2) and r == 5:
        return NOT_IDENTIFIABLE, "row (2,2,2,2,2), r=5"
    ub = _unbalanced_bound(dims)
    if dims[-1] >= 2 and dims[0] > ub and r >= ub:
        return NOT_IDENTIFIABLE, f"unbalanced row: n1={dims[0]} > {ub}, r >= {ub}"
    r0 = expected_generic_rank(dims)
    if r < r0 and math.prod(dims) <= TABLE_MAX_PRODUCT:
        return IDENTIFIABLE, f"r < r0 = {r0}, product <= {TABLE_MAX_PRODUCT}, no row"
    return INCONCLUSIVE, f"outside table hypotheses (r0 = {r0})"


class SymmetricVerdict(NamedTuple):
    verdict: str
    bound: int
    exception: bool


def symmetric_identifiable(d: int, n: int, r: int) -> SymmetricVerdict:
    """Degree-d symmetric tensors on an (n+1)-dim space, rank r.

    Identifiable iff ``r < ceil(C(n+d, d) / (n+1))`` and ``(d, n, r)`` is not a
    listed exception; otherwise inconclusive.
    """
    if d < 2 or n < 1:
        raise ValueError("need d >= 2 and n >= 1")
    bound = -(-math.comb(n + d, d) // (n + 1))
    exc = (d, n, r) in SYMMETRIC_EXCEPTIONS
    ok = r < bound and not exc
    return SymmetricVerdict(IDENTIFIABLE if ok else INCONCLUSIVE, bound, exc)


@dataclass(frozen=True)
class IdentifiabilityReport:
    shape: tuple[int, ...]
    r: int
    verdicts: dict
    jacobian_rank: Optional[int]
    expected_dim: int
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "r": self.r,
                "verdicts": dict(self.verdicts),
                "jacobian_rank": self.jacobian_rank,
                "expected_dim": self.expected_dim,
                "evidence": dict(self.evidence)}


def identifiability_report(shape, r: int, symmetric=None, seed: int = 0,
                           jacobian: bool = True) -> IdentifiabilityReport:
    shape = check_shape(shape)
    verdicts, evidence = {}, {}
    if len(shape) == 3:
        verdicts["chiantini_ottaviani"] = (
            IDENTIFIABLE if chiantini_ottaviani(shape, r) else INCONCLUSIVE)
        verdicts["domanov_delathauwer"] = (
            IDENTIFIABLE if domanov_delathauwer(shape, r) else INCONCLUSIVE)
    verdict, reason = exception_tables(shape, r)
    verdicts["exception_table"] = verdict
    evidence["exception_table"] = reason
    jrank = None
    if jacobian and math.prod(shape) <= 10**5:
        df = is_defective(shape, r, seed)
        jrank = df.jacobian_rank
        verdicts["jacobian"] = DEFECTIVE if df.defective else INCONCLUSIVE
        evidence["singular_value_gap"] = list(df.gap)
        evidence["rtol"] = JACOBIAN_RTOL
    if symmetric is not None:
        sd, sn = symmetric
        sv = symmetric_identifiable(sd, sn, r)
        verdicts["symmetric"] = sv.verdict
        evidence["symmetric"] = {"d": sd, "n": sn, "bound": sv.bound,
                                 "exception": sv.exception}
    return IdentifiabilityReport(shape, r, verdicts, jrank,
                                 expected_dim(shape, r), evidence)


UNIQUE_EVIDENCE = "unique_evidence"
NON_UNIQUE_WITNESS = "non_unique_witness"


@dataclass(frozen=True)
class UniquenessVerdict:
    clusters: int
    residual_threshold: float
    matched_fraction: float
    verdict: str
    successes: int = 0
    cluster_sizes: tuple[int, ...] = ()
    witnesses: tuple[Decomposition, ...] = field(default=(), repr=False)
    cells_differ: Optional[bool] = None

    def to_dict(self) -> dict:
        out = {"clusters": self.clusters,
               "residual_threshold": self.residual_threshold,
               "matched_fraction": self.matched_fraction,
               "verdict": self.verdict, "successes": self.successes,
               "cluster_sizes": list(self.cluster_sizes)}
        if self.witnesses:
            out["witnesses"] = [w.to_dict() for w in self.witnesses]
            out["cells_differ"] = self.cells_differ
        return out


def _lex_key(dec: Decomposition):
    return tuple(np.concatenate([np.concatenate(t.factors)
                                 for t in dec.terms]))


def cluster_decompositions(decs, match_tol: float) -> list[list[Decomposition]]:
    """Greedy clustering by term matching against each cluster's first member."""
    clusters: list[list[Decomposition]] = []
    for dec in decs:
        for cl in clusters:
            if match_decompositions(cl[0], dec, match_tol).matched:
                cl.append(dec)
                break
        else:
            clusters.append([dec])
    return clusters


def uniqueness_by_restarts(A: Tensor, r: int,
                           cfg: SolverConfig = SolverConfig(restarts=20),
                           match_tol: float = 1e-5, min_successes: int = 10,
                           eps_supp: float = 1e-7) -> UniquenessVerdict:
    """Empirical uniqueness of the rank-r nonnegative decomposition of ``A``.

    Successful restarts (residual within ``feas_tol * ||A||``) are
    canonicalized and clustered by term matching. One cluster holding at
    least ``min_successes`` restarts is evidence of uniqueness; two clusters
    are a non-uniqueness witness.
    """
    res = nncp_solve(A, r, cfg, diagnostics=False, keep_all=True)
    thr = cfg.feas_tol * res.input_norm
    good = [canonicalize(d) for d, rr in
            zip(res.restart_decompositions, res.restart_residuals)
            if rr <= thr and not any(t.is_zero() for t in d.terms)]
    clusters = cluster_decompositions(good, match_tol)
    clusters.sort(key=len, reverse=True)
    n_ok = len(good)
    frac = len(clusters[0]) / n_ok if clusters else 0.0
    sizes = tuple(len(c) for c in clusters)
    if len(clusters) >= 2:
        w = tuple(min(c, key=_lex_key) for c in clusters[:2])
        differ = distinct_cells_witness(w[0], w[1], eps_supp)
        return UniquenessVerdict(len(clusters), thr, frac, NON_UNIQUE_WITNESS,
                                 n_ok, sizes, w, differ)
    if len(clusters) == 1 and n_ok >= min_successes:
        return UniquenessVerdict(1, thr, frac, UNIQUE_EVIDENCE, n_ok, sizes,
                                 (min(clusters[0], key=_lex_key),))
    return UniquenessVerdict(len(clusters), thr, frac, INCONCLUSIVE, n_ok, sizes)
