import numpy as np
import pytest

from nnrank.cells import (EXCLUDED, UNIQUE, UNKNOWN, CellPattern,
                          distinct_cells_witness, support_cover_check,
                          support_pattern, uni23_cell_screen)
from nnrank.experiments import planted_decomposition
from nnrank.tensor import Decomposition, RankOneTerm, evaluate

E1, E2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])


def ex222_decomp():
    return Decomposition((2, 2, 2), tuple(RankOneTerm(t) for t in [
        (E1, E1, E1), (E2, E2, E1), (E1, E2, E2), (E2, E1, E2)]),
        "nonnegative")


def test_positive_is_trivial(rng):
    D = Decomposition.from_factor_matrices(
        [rng.random((n, 3)) + 0.1 for n in (3, 4, 2)], "nonnegative")
    p = support_pattern(D)
    assert p.trivial and not p.on_boundary and p.admissible


def test_ex222_pattern():
    p = support_pattern(ex222_decomp())
    assert not p.trivial and p.on_boundary and p.admissible
    assert support_cover_check(p) == [True, True, True]
    assert p.zero_sets[0] == tuple(frozenset({i}) for i in (2, 1, 2, 1))


def test_shared_zero_not_admissible():
    e1 = np.array([1.0, 0.0, 0.0])
    D = Decomposition((3, 2, 2), (RankOneTerm((e1, [1, 1], [1, 2])),
                                  RankOneTerm((e1, [2, 1], [1, 1]))),
                      "nonnegative")
    p = support_pattern(D)
    assert not p.admissible
    assert frozenset.intersection(*p.zero_sets[0]) == {2, 3}


def test_cover():
    D = Decomposition((2, 2, 2), (RankOneTerm(([1, 2], [1, 1], [3, 1])),),
                      "nonnegative")
    assert support_cover_check(support_pattern(D)) == [True] * 3
    D2 = Decomposition((2, 2, 2), (RankOneTerm((E1, [1, 1], [1, 1])),
                                   RankOneTerm((E1, [1, 2], [2, 1]))),
                       "nonnegative")
    assert support_cover_check(support_pattern(D2)) == [False, True, True]


def test_threshold_relative():
    # ratio 1e-6 to the factor max: support at 1e-7, zero at 1e-5
    D = Decomposition((2, 2), (RankOneTerm(([1e6, 1.0], [1, 1])),),
                      "nonnegative")
    assert support_pattern(D, 1e-7).trivial
    assert not support_pattern(D, 1e-5).trivial


def test_degenerate_flagged():
    D = Decomposition((2, 2), (RankOneTerm(([0, 0], [1, 1])),),
                      "nonnegative")
    assert support_pattern(D).degenerate


def test_real_mode_rejected():
    with pytest.raises(ValueError):
        support_pattern(Decomposition((2, 2), (RankOneTerm(([1, 1], [1, 1])),)))


def test_invariant_under_gauge(rng):
    D = ex222_decomp()
    terms = [RankOneTerm((3 * t.factors[0], t.factors[1] / 3, t.factors[2]))
             for t in D.terms[::-1]]
    D2 = Decomposition(D.shape, tuple(terms), D.mode)
    assert not distinct_cells_witness(D, D2)
    assert sorted(map(str, support_pattern(D).term_patterns())) == sorted(
        map(str, support_pattern(D2).term_patterns()))


def test_distinct_cells_split_term():
    diag1 = RankOneTerm((E1, E1, E1))
    diag2 = RankOneTerm((E2, E2, E2))
    half1 = RankOneTerm((0.5 * E1, E1, E1))
    half2 = RankOneTerm((0.5 * E2, E2, E2))
    D1 = Decomposition((2, 2, 2), (half1, half1, diag2), "nonnegative")
    D2 = Decomposition((2, 2, 2), (diag1, half2, half2), "nonnegative")
    assert np.allclose(evaluate(D1).data, evaluate(D2).data)
    assert distinct_cells_witness(D1, D2)
    assert not distinct_cells_witness(D1, D1)


def test_distinct_cells_rank_mismatch():
    D = ex222_decomp()
    with pytest.raises(ValueError):
        distinct_cells_witness(D, Decomposition(D.shape, D.terms[:3], D.mode))


def test_planted_positive_rarely_on_boundary():
    on = 0
    for seed in range(500):
        D = planted_decomposition((3, 3, 3), 2, np.random.default_rng(seed))
        on += support_pattern(D).on_boundary
    assert on / 500 <= 0.01


def _pattern(zs, shape=(3, 3, 3)):
    return CellPattern.from_zero_sets(shape, zs)


class TestScreen:
    def test_r2_trivial(self):
        p = _pattern([[set(), set()]] * 3)
        assert uni23_cell_screen((3, 3, 3), 2, p) == UNIQUE

    def excluded(self):
        # mode 1 shares a point on terms 1, 2; mode 2 on 1, 3; mode 3 on 2, 3
        return [[{2, 3}, {2, 3}, {1}],
                [{2, 3}, set(), {2, 3}],
                [{1}, {2, 3}, {2, 3}]]

    def test_r3_excluded(self):
        p = _pattern(self.excluded())
        assert p.admissible
        assert uni23_cell_screen((3, 3, 3), 3, p) == EXCLUDED

    def test_r3_excluded_up_to_permutation(self):
        zs = self.excluded()
        perm = [2, 0, 1]
        p = _pattern([[mode[i] for i in perm] for mode in zs])
        assert uni23_cell_screen((3, 3, 3), 3, p) == EXCLUDED

    def test_r3_other_admissible(self):
        p = _pattern([[{1}, set(), set()], [set(), {2}, set()],
                      [set(), set(), {3}]])
        assert uni23_cell_screen((3, 3, 3), 3, p) == UNIQUE

    def test_r3_not_admissible(self):
        p = _pattern([[{1}, {1}, {1}], [set()] * 3, [set()] * 3])
        assert uni23_cell_screen((3, 3, 3), 3, p) == UNKNOWN

    def test_preconditions(self):
        p = _pattern([[set(), set()]] * 3, (2, 3, 3))
        with pytest.raises(ValueError):
            uni23_cell_screen((2, 3, 3), 2, p)
        with pytest.raises(ValueError):
            uni23_cell_screen((3, 3, 3), 4, _pattern([[set()] * 4] * 3))
        with pytest.raises(ValueError):
            uni23_cell_screen((3, 3, 3), 3, _pattern([[set(), set()]] * 3))


def test_to_dict_one_based():
    d = support_pattern(ex222_decomp()).to_dict()
    assert d["zero_sets"][0] == [[2], [1], [2], [1]]
    assert d["support_cover"] == [True, True, True]
    assert d["eps_supp"] == 1e-7
