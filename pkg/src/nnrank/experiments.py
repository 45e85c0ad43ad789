"""Seeded Monte Carlo experiments.

Every sample ``i`` of a run with seed ``s`` draws its data from the stream
``(s, i)`` and hands the solver a seed derived from the same pair, so
reports are reproducible bit for bit and independent of evaluation order.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .cells import support_pattern
from .identifiability import (INCONCLUSIVE, NON_UNIQUE_WITNESS,
                              UNIQUE_EVIDENCE, expected_generic_rank,
                              uniqueness_by_restarts)
from .rank_oracles import flattening_lower_bound, nonneg_rank_bounds
from .solvers import (SolverConfig, als_solve_real, nncp_solve,
                      kkt_residuals)
from .tensor import Decomposition, Tensor, check_shape, evaluate

NONNEG_SAMPLING = "i.i.d. uniform(0,1) entries"
FORM_SAMPLING = ("i.i.d. standard normal a_i in sum a_i C(d,i) x^i y^(d-i) "
                 "(weighted monomial basis)")
KKT_TOL = 1e-6


def sample_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & ((1 << 64) - 1), int(index),
                                  int(stream)])


def derived_seed(seed: int, index: int) -> int:
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), int(index), 7])
    return int(ss.generate_state(1, np.uint64)[0])


def uniform_tensor(shape, rng) -> Tensor:
    shape = check_shape(shape)
    return Tensor(shape, rng.random(math.prod(shape)), nonneg=True)


def planted_decomposition(shape, r, rng, mode="nonnegative") -> Decomposition:
    """Random rank-r decomposition: uniform(0,1) (nonnegative) or normal factors."""
    if mode == "nonnegative":
        mats = [rng.random((n, r)) for n in shape]
    else:
        mats = [rng.standard_normal((n, r)) for n in shape]
    return Decomposition.from_factor_matrices(mats, mode)


def estimate_rank(A: Tensor, r_max: int, cfg: SolverConfig, real=False):
    """Smallest r <= r_max with a fit within ``feas_tol * ||A||``, else None.

    The search starts at the flattening rank, below which no exact fit
    exists.
    """
    norm = A.norm()
    if norm == 0:
        return 0
    start = max(1, flattening_lower_bound(A))
    for r in range(start, r_max + 1):
        if real:
            res = als_solve_real(A, r, cfg, stop_at_feasible=True)
        else:
            res = nncp_solve(A, r, cfg, diagnostics=False,
                             stop_at_feasible=True)
        if res.residual <= cfg.feas_tol * norm:
            return r
    return None


@dataclass(frozen=True)
class RankHistogram:
    shape: tuple[int, ...]
    samples: int
    seed: int
    r_max: int
    counts: dict
    mode: str
    config: dict
    sampling: str = NONNEG_SAMPLING

    @property
    def fractions(self) -> dict:
        return {k: v / self.samples for k, v in self.counts.items()}

    def fraction(self, rank) -> float:
        return self.counts.get(rank, 0) / self.samples

    def to_dict(self) -> dict:
        keys = sorted(self.counts, key=lambda k: (isinstance(k, str), k))
        return {
            "shape": list(self.shape), "samples": self.samples,
            "seed": self.seed, "r_max": self.r_max, "mode": self.mode,
            "sampling": self.sampling,
            "heuristic": ("ranks are upper-bound assignments from a "
                          "feasibility search with a fixed restart budget"),
            "histogram": [{"rank": k, "count": self.counts[k],
                           "fraction": self.counts[k] / self.samples}
                          for k in keys],
            "solver_config": self.config,
        }

    def csv_rows(self):
        return [("rank", "count", "fraction")] + [
            (h["rank"], h["count"], h["fraction"])
            for h in self.to_dict()["histogram"]]


def typical_rank_histogram(shape, samples: int, r_max: int,
                           cfg: SolverConfig = SolverConfig(), seed: int = 0,
                           real: bool = False) -> RankHistogram:
    """Histogram of estimated ranks of uniformly sampled nonnegative tensors."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    shape = check_shape(shape)
    counts: dict = {}
    for i in range(samples):
        A = uniform_tensor(shape, sample_rng(seed, i))
        r = estimate_rank(A, r_max, cfg.with_(seed=derived_seed(seed, i)),
                          real)
        key = r if r is not None else f">{r_max}"
        counts[key] = counts.get(key, 0) + 1
    return RankHistogram(shape, samples, seed, r_max, counts,
                         "real" if real else "nonnegative", cfg.to_dict())


def _trim(c, tol_rel=1e-10):
    c = np.asarray(c, dtype=float)
    top = np.abs(c).max(initial=0.0)
    if top == 0:
        return c[:0]
    nz = np.flatnonzero(np.abs(c) > tol_rel * top)
    return c[:nz[-1] + 1] / top


def _poly_gcd(a, b, tol_rel=1e-10):
    a, b = _trim(a, tol_rel), _trim(b, tol_rel)
    while b.size:
        _, rem = P.polydiv(a, b)
        # remainder is negligible relative to the dividend
        scale = np.abs(a).max()
        rem = np.where(np.abs(rem) > tol_rel * scale, rem, 0.0)
        a, b = b, _trim(rem, tol_rel)
    return a


def _sign_changes(values) -> int:
    signs = [v for v in values if v != 0]
    return sum(1 for x, y in zip(signs, signs[1:]) if (x > 0) != (y > 0))


def sturm_sequence(c, tol_rel=1e-10) -> list[np.ndarray]:
    """Sturm chain of the polynomial with ascending coefficients ``c``."""
    p0 = _trim(c, tol_rel)
    chain = [p0]
    p1 = _trim(P.polyder(p0), tol_rel) if p0.size > 1 else p0[:0]
    while p1.size:
        chain.append(p1)
        _, rem = P.polydiv(chain[-2], chain[-1])
        scale = np.abs(chain[-2]).max()
        rem = np.where(np.abs(rem) > tol_rel * scale, rem, 0.0)
        p1 = -_trim(rem, tol_rel) if np.any(rem) else rem[:0]
    return chain


def count_distinct_real_roots(coeffs, tol_rel: float = 1e-10) -> int:
    """Number of distinct real roots; ``coeffs`` in ascending powers.

    Uses a Sturm chain of the square-free part ``p / gcd(p, p')``. Zero tests
    are relative to the largest coefficient magnitude.
    """
    p = _trim(coeffs, tol_rel)
    if p.size == 0:
        raise ValueError("zero polynomial")
    if p.size == 1:
        return 0
    g = _poly_gcd(p, P.polyder(p), tol_rel)
    q = _trim(P.polydiv(p, g)[0], tol_rel) if g.size > 1 else p
    chain = sturm_sequence(q, tol_rel)
    at_pos = [c[-1] for c in chain]
    at_neg = [c[-1] * (-1) ** (c.size - 1) for c in chain]
    return _sign_changes(at_neg) - _sign_changes(at_pos)


def form_coefficients(a) -> np.ndarray:
    """Dehomogenized coefficients ``a_i * C(d, i)`` (ascending in x)."""
    a = np.asarray(a, dtype=float)
    d = a.size - 1
    return a * np.array([math.comb(d, i) for i in range(d + 1)], dtype=float)


def count_form_roots(a) -> int:
    """Distinct real roots of a binary form, counting a root at infinity."""
    c = form_coefficients(a)
    at_inf = 1 if c[-1] == 0 else 0
    if not np.any(c):
        raise ValueError("zero form")
    return count_distinct_real_roots(c) + at_inf


def binary_form_experiment(d: int, samples: int, seed: int = 0) -> dict:
    """Fraction of random binary forms of degree ``d`` with d distinct real roots.

    That fraction estimates the measure of the locus of real rank ``d``.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = sample_rng(seed, 0)
    coeffs = rng.standard_normal((samples, d + 1))
    hits = sum(1 for a in coeffs if count_form_roots(a) == d)
    frac = hits / samples
    return {"degree": d, "samples": samples, "seed": seed,
            "sampling": FORM_SAMPLING, "count_d_real_roots": hits,
            "fraction": frac,
            "stderr": math.sqrt(frac * (1 - frac) / samples),
            "typical_rank_interval": [(d + 2) // 2, d]}


def binary_form_samples(d: int, samples: int, seed: int = 0) -> np.ndarray:
    """The coefficient draws used by ``binary_form_experiment``."""
    return sample_rng(seed, 0).standard_normal((samples, d + 1))


@dataclass(frozen=True)
class SurveyReport:
    shape: tuple[int, ...]
    r: int
    samples: int
    fraction_on_boundary: float
    fraction_unique_evidence: float
    fraction_non_unique: float
    fraction_inconclusive: float
    interior_converged: int = 0
    fraction_unique_evidence_interior: float = 0.0
    fraction_kkt_pass: float = 0.0
    seed: int = 0
    details: tuple = field(default=(), repr=False)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "r": self.r,
                "samples": self.samples, "seed": self.seed,
                "sampling": NONNEG_SAMPLING,
                "fraction_on_boundary": self.fraction_on_boundary,
                "fraction_unique_evidence": self.fraction_unique_evidence,
                "fraction_non_unique": self.fraction_non_unique,
                "fraction_inconclusive": self.fraction_inconclusive,
                "interior_converged": self.interior_converged,
                "fraction_unique_evidence_interior":
                    self.fraction_unique_evidence_interior,
                "fraction_kkt_pass": self.fraction_kkt_pass,
                "kkt_tol": KKT_TOL}

    def csv_rows(self):
        d = self.to_dict()
        return [("key", "value")] + [(k, v) for k, v in d.items()
                                     if not isinstance(v, (list, dict))]


def uniqueness_config(cfg: SolverConfig) -> SolverConfig:
    """Restart settings for decomposing an exact rank-r tensor.

    Every restart, not just the winner, has to reach ``feas_tol``, so the
    per-restart descent runs longer than in approximation mode.
    """
    return cfg.with_(restarts=max(cfg.restarts, 20),
                     stall_tol=min(cfg.stall_tol, 1e-14),
                     max_outer_iters=max(cfg.max_outer_iters, 20000))


def approximation_survey(shape, r: int, samples: int,
                         cfg: SolverConfig = SolverConfig(), seed: int = 0,
                         match_tol: float = 1e-5,
                         uniq_cfg: SolverConfig | None = None,
                         eps_supp: float = 1e-7) -> SurveyReport:
    """Boundary and uniqueness statistics of best rank-r approximations.

    For each uniform positive tensor: approximate, check first-order
    conditions, classify the cell of the approximation, then test whether
    the approximation itself has a unique rank-r decomposition.
    """
    shape = check_shape(shape)
    if r >= expected_generic_rank(shape):
        warnings.warn(f"r = {r} is not below the generic rank of {shape}")
    if uniq_cfg is None:
        uniq_cfg = uniqueness_config(cfg)
    boundary = unique = nonunique = inconcl = 0
    interior_conv = interior_unique = kkt_pass = 0
    details = []
    for i in range(samples):
        A = uniform_tensor(shape, sample_rng(seed, i))
        s = derived_seed(seed, i)
        res = nncp_solve(A, r, cfg.with_(seed=s), eps_supp=eps_supp)
        on_b = res.boundary.on_boundary
        conv = res.kkt.max() <= KKT_TOL
        approx = evaluate(res.best)
        uv = uniqueness_by_restarts(approx, r, uniq_cfg.with_(seed=s ^ 1),
                                    match_tol, eps_supp=eps_supp)
        boundary += on_b
        kkt_pass += conv
        unique += uv.verdict == UNIQUE_EVIDENCE
        nonunique += uv.verdict == NON_UNIQUE_WITNESS
        inconcl += uv.verdict == INCONCLUSIVE
        if conv and not on_b:
            interior_conv += 1
            interior_unique += uv.verdict == UNIQUE_EVIDENCE
        details.append({"residual": res.residual, "on_boundary": on_b,
                        "kkt": res.kkt.max(), "verdict": uv.verdict})
    n = samples
    return SurveyReport(shape, r, n, boundary / n, unique / n, nonunique / n,
                        inconcl / n, interior_conv,
                        interior_unique / interior_conv if interior_conv else 0.0,
                        kkt_pass / n, seed, tuple(details))


def rank_coincidence_experiment(shape, r: int, samples: int,
                                cfg: SolverConfig = SolverConfig(),
                                seed: int = 0, extra=()) -> dict:
    """Do planted nonnegative rank-r tensors have real rank exactly r?

    Real rank <= r is witnessed by ALS reaching ``feas_tol * ||A||``; real
    rank >= r by the flattening bound. ``extra`` tensors are reported
    separately with their nonnegative rank bounds.
    """
    shape = check_shape(shape)
    if r >= expected_generic_rank(shape):
        warnings.warn(f"r = {r} is not below the generic rank of {shape}")
    hits = 0
    for i in range(samples):
        rng = sample_rng(seed, i)
        A = evaluate(planted_decomposition(shape, r, rng))
        c = cfg.with_(seed=derived_seed(seed, i))
        real = als_solve_real(A, r, c, stop_at_feasible=True)
        upper_ok = real.residual <= cfg.feas_tol * A.norm()
        lower_ok = flattening_lower_bound(A) == r
        hits += upper_ok and lower_ok
    out = {"shape": list(shape), "r": r, "samples": samples, "seed": seed,
           "sampling": "planted factors with " + NONNEG_SAMPLING,
           "coincidence_fraction": hits / samples, "extra": []}
    for j, T in enumerate(extra):
        c = cfg.with_(seed=derived_seed(seed, samples + j))
        real = als_solve_real(T, r, c, stop_at_feasible=True)
        out["extra"].append({
            "shape": list(T.shape),
            "flattening_lower": flattening_lower_bound(T),
            "real_rank_at_most_r": bool(real.residual <= cfg.feas_tol * T.norm()),
            "real_residual": real.residual,
            "nonneg_bounds": nonneg_rank_bounds(T, None, c).to_dict(),
        })
    return out


def write_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def write_plot_script(csv_path, kind: str) -> str:
    """Write a gnuplot script next to ``csv_path``; returns its path."""
    script = str(csv_path) + ".gp"
    if kind == "histogram":
        body = (f'set datafile separator ","\nset style data histograms\n'
                f'set style fill solid\nset xlabel "rank"\n'
                f'set ylabel "fraction"\n'
                f'plot "{csv_path}" using 3:xtic(1) skip 1 title "fraction"\n')
    else:
        body = (f'set datafile separator ","\nset style data histograms\n'
                f'set style fill solid\n'
                f'plot "{csv_path}" using 2:xtic(1) skip 1 title "value"\n')
    with open(script, "w") as fh:
        fh.write(body)
    return script
