"""Randomized property suites, 1000 trials each."""
import json

import numpy as np
from hypothesis import given, settings, strategies as st

from nnrank.experiments import typical_rank_histogram
from nnrank.solvers import SolverConfig, als_solve_real, nncp_solve
from nnrank.tensor import (Decomposition, RankOneTerm, Tensor, canonicalize,
                           evaluate, match_decompositions)

TRIALS = settings(max_examples=1000, deadline=None)

seeds = st.integers(0, 2**63 - 1)
shapes = st.lists(st.integers(1, 4), min_size=2, max_size=4).map(tuple)


def random_decomp(g, shape, r, mode="real"):
    if mode == "real":
        mats = [g.standard_normal((n, r)) for n in shape]
    else:
        mats = [g.random((n, r)) + 1e-3 for n in shape]
    return Decomposition.from_factor_matrices(mats, mode)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@TRIALS
@given(seeds, shapes, st.integers(1, 3))
def test_multilinearity(seed, shape, r):
    g = np.random.default_rng(seed)
    D = random_decomp(g, shape, r)
    k = int(g.integers(len(shape)))
    i = int(g.integers(r))
    alpha, beta = g.standard_normal(2)
    u2 = g.standard_normal(shape[k])

    def with_factor(vec):
        terms = list(D.terms)
        fs = list(terms[i].factors)
        fs[k] = vec
        terms[i] = RankOneTerm(fs)
        return evaluate(Decomposition(D.shape, tuple(terms))).data

    u1 = D.terms[i].factors[k]
    others = evaluate(Decomposition(
        D.shape, D.terms[:i] + D.terms[i + 1:])).data
    lhs = with_factor(alpha * u1 + beta * u2) - others
    rhs = alpha * (with_factor(u1) - others) + beta * (with_factor(u2) - others)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(1.0, np.linalg.norm(rhs))


@TRIALS
@given(seeds, shapes)
def test_norm_multiplicative(seed, shape):
    g = np.random.default_rng(seed)
    fs = [g.standard_normal(n) for n in shape]
    T = evaluate(Decomposition(shape, (RankOneTerm(fs),)))
    want = np.prod([np.linalg.norm(f) for f in fs])
    assert abs(T.norm() - want) <= 1e-12 * max(want, 1e-300)


@TRIALS
@given(seeds, st.integers(1, 3))
def test_gauge_invariance(seed, r):
    g = np.random.default_rng(seed)
    shape = tuple(int(n) for n in g.integers(1, 5, size=3))
    D = random_decomp(g, shape, r, "nonnegative")
    A = Tensor(shape, g.random(int(np.prod(shape))), True)
    a, b = np.exp(g.uniform(-3, 3, size=2))
    i = int(g.integers(r))
    terms = list(D.terms)
    u, v, w = terms[i].factors
    terms[i] = RankOneTerm((a * u, b * v, w / (a * b)))
    D2 = Decomposition(shape, tuple(terms), D.mode)
    T1, T2 = evaluate(D).data, evaluate(D2).data
    assert np.linalg.norm(T1 - T2) <= 1e-12 * max(1.0, np.linalg.norm(T1))
    r1 = np.linalg.norm(A.data - T1)
    r2 = np.linalg.norm(A.data - T2)
    assert abs(r1 - r2) <= 1e-12 * max(1.0, r1)


@TRIALS
@given(seeds, shapes, st.integers(1, 4), st.sampled_from(["real",
                                                          "nonnegative"]))
def test_canonicalize_idempotent(seed, shape, r, mode):
    g = np.random.default_rng(seed)
    D = random_decomp(g, shape, r, mode)
    c = canonicalize(D)
    assert canonicalize(c) == c
    assert rel(evaluate(c).data, evaluate(D).data) <= 1e-12


@TRIALS
@given(seeds, st.integers(1, 4))
def test_match_shuffled_rescaled(seed, r):
    g = np.random.default_rng(seed)
    shape = tuple(int(n) for n in g.integers(1, 5, size=3))
    D = random_decomp(g, shape, r)
    perm = g.permutation(r)
    terms = []
    for i in perm:
        u, v, w = D.terms[i].factors
        a, b = g.uniform(0.2, 5, size=2) * g.choice([-1, 1], size=2)
        terms.append(RankOneTerm((a * u, b * v, w / (a * b))))
    m = match_decompositions(D, Decomposition(shape, tuple(terms)), 1e-12)
    assert m.matched
    assert m.max_term_distance <= 1e-12 * max(1.0, evaluate(D).norm())


@TRIALS
@given(seeds, st.integers(1, 3), st.booleans())
def test_monotone_residuals(seed, r, nonneg):
    g = np.random.default_rng(seed)
    shape = tuple(int(n) for n in g.integers(2, 4, size=3))
    data = g.random(int(np.prod(shape)))
    A = Tensor(shape, data, True)
    cfg = SolverConfig(restarts=1, max_outer_iters=50, seed=seed,
                       polish_iters=50)
    if nonneg:
        res = nncp_solve(A, r, cfg, diagnostics=False)
    else:
        res = als_solve_real(A, r, cfg)
    for h in res.histories:
        assert np.all(np.diff(h) <= 1e-12 * max(h[0], 1e-300))
    assert res.residual <= res.histories[res.best_index][0] + 1e-12


@TRIALS
@given(seeds, st.booleans())
def test_histogram_determinism(seed, real):
    cfg = SolverConfig(restarts=2, max_outer_iters=100, polish_iters=100,
                       trf_nfev=20)
    a = typical_rank_histogram((2, 2, 2), 1, 4, cfg, seed=seed, real=real)
    b = typical_rank_histogram((2, 2, 2), 1, 4, cfg, seed=seed, real=real)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
