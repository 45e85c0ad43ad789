"""Zero-pattern cells of nonnegative decompositions.

A decomposition's cell is given by the zero-index set of every factor (the
complement of its numerical support). Indices are 1-based throughout.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from .tensor import Decomposition

UNIQUE = "unique_by_theory"
EXCLUDED = "excluded_cell"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class CellPattern:
    """``zero_sets[k][i]`` is the zero-index set of factor ``k`` of term ``i``."""

    shape: tuple[int, ...]
    zero_sets: tuple[tuple[frozenset, ...], ...]
    eps_supp: float = 1e-7
    degenerate: bool = False

    @property
    def rank(self) -> int:
        return len(self.zero_sets[0]) if self.zero_sets else 0

    @property
    def trivial(self) -> bool:
        return all(not z for mode in self.zero_sets for z in mode)

    @property
    def on_boundary(self) -> bool:
        return not self.trivial

    @property
    def admissible(self) -> bool:
        return all(not frozenset.intersection(*mode) if mode else True
                   for mode in self.zero_sets)

    def supports(self, k: int) -> list[frozenset]:
        full = frozenset(range(1, self.shape[k] + 1))
        return [full - z for z in self.zero_sets[k]]

    def term_patterns(self) -> list[tuple[frozenset, ...]]:
        return [tuple(self.zero_sets[k][i] for k in range(len(self.shape)))
                for i in range(self.rank)]

    def to_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "eps_supp": self.eps_supp,
            "zero_sets": [[sorted(z) for z in mode] for mode in self.zero_sets],
            "trivial": self.trivial,
            "admissible": self.admissible,
            "on_boundary": self.on_boundary,
            "degenerate": self.degenerate,
            "support_cover": support_cover_check(self),
        }

    @classmethod
    def from_zero_sets(cls, shape, zero_sets, eps_supp=1e-7):
        zs = tuple(tuple(frozenset(z) for z in mode) for mode in zero_sets)
        degenerate = any(len(z) == n for mode, n in zip(zs, shape)
                         for z in mode)
        return cls(tuple(shape), zs, eps_supp, degenerate)


def support_pattern(decomp: Decomposition, eps_supp: float = 1e-7) -> CellPattern:
    """Cell of ``decomp``: entry counts as nonzero iff > eps_supp * factor max."""
    if decomp.mode != "nonnegative":
        raise ValueError("support_pattern requires a nonnegative decomposition")
    zero_sets = []
    for k, n in enumerate(decomp.shape):
        mode = []
        for term in decomp.terms:
            f = term.factors[k]
            top = f.max(initial=0.0)
            nz = f > eps_supp * top if top > 0 else np.zeros(n, dtype=bool)
            mode.append(frozenset(int(a) + 1 for a in np.flatnonzero(~nz)))
        zero_sets.append(mode)
    return CellPattern.from_zero_sets(decomp.shape, zero_sets, eps_supp)


def support_cover_check(pattern: CellPattern) -> list[bool]:
    """Per mode: do the factor supports jointly cover every index?"""
    out = []
    for k, n in enumerate(pattern.shape):
        union = frozenset().union(*pattern.supports(k)) if pattern.rank else frozenset()
        out.append(len(union) == n)
    return out


def distinct_cells_witness(D1: Decomposition, D2: Decomposition,
                           eps_supp: float = 1e-7) -> bool:
    """True iff the two decompositions lie in different cells.

    Cells are compared as multisets of per-term patterns. Two decompositions
    of the same tensor in different cells witness non-uniqueness.
    """
    if D1.rank != D2.rank:
        raise ValueError("decompositions must have the same number of terms")
    p1 = Counter(support_pattern(D1, eps_supp).term_patterns())
    p2 = Counter(support_pattern(D2, eps_supp).term_patterns())
    return p1 != p2


def _is_point(z: frozenset, n: int):
    """If the support (complement of ``z``) is a single index, return it."""
    supp = set(range(1, n + 1)) - z
    return next(iter(supp)) if len(supp) == 1 else None


def _matches_excluded(zero_sets, shape) -> bool:
    # roles: mode 0 shares a point support on terms (0, 1), mode 1 on (0, 2),
    # mode 2 on (1, 2); the remaining term avoids everything but that point
    roles = ((0, 1, 2), (0, 2, 1), (1, 2, 0))
    for k, (a, b, c) in enumerate(roles):
        n = shape[k]
        za, zb, zc = zero_sets[k][a], zero_sets[k][b], zero_sets[k][c]
        if za != zb:
            return False
        pt = _is_point(za, n)
        if pt is None or not zc <= {pt}:
            return False
    return True


def uni23_cell_screen(shape, r: int, pattern: CellPattern) -> str:
    """Screen a cell against the r = 2, 3 uniqueness argument.

    Returns ``unique_by_theory`` for admissible cells whose general points
    have unique decompositions, ``excluded_cell`` for the one admissible
    r = 3 configuration that cannot contain a best approximation, and
    ``unknown`` when the hypotheses are not met.
    """
    shape = tuple(shape)
    if r not in (2, 3):
        raise ValueError("screen applies to r = 2 or 3 only")
    if len(shape) != 3 or min(shape) < 3:
        raise ValueError("screen requires an order-3 shape with all dims >= 3")
    if pattern.rank != r:
        raise ValueError("pattern term count does not match r")
    if not pattern.admissible or pattern.degenerate:
        return UNKNOWN
    if r == 2:
        return UNIQUE
    zs = pattern.zero_sets
    for perm in permutations(range(3)):
        permuted = [[zs[k][perm[i]] for i in range(3)] for k in range(3)]
        if _matches_excluded(permuted, shape):
            return EXCLUDED
    return UNIQUE
