"""Dense tensors, rank-one terms and decompositions.

Tensors are stored as flat row-major arrays (last index fastest). All values
are treated as immutable; operations return new objects.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

MAX_AMBIENT = 10**6
MODES = ("real", "nonnegative")
_NORM_SLACK = 8 * np.finfo(float).eps


class ShapeError(ValueError):
    """Raised when shapes, orders or modes are inconsistent."""


def check_shape(dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(n) for n in dims)
    if len(dims) < 2:
        raise ShapeError(f"tensor order must be >= 2, got {len(dims)}")
    if any(n < 1 for n in dims):
        raise ShapeError(f"all dimensions must be >= 1, got {dims}")
    if int(np.prod(dims, dtype=object)) > MAX_AMBIENT:
        raise ShapeError(f"ambient dimension of {dims} exceeds {MAX_AMBIENT}")
    return dims


@dataclass(frozen=True, eq=False)
class Tensor:
    """A dense real tensor with a nonnegativity flag."""

    shape: tuple[int, ...]
    data: np.ndarray
    nonneg: bool = False

    def __post_init__(self):
        shape = check_shape(self.shape)
        data = np.array(self.data, dtype=float).reshape(-1)
        if data.size != int(np.prod(shape)):
            raise ShapeError(
                f"data length {data.size} does not match shape {shape}")
        if self.nonneg and np.any(data < 0):
            raise ValueError("tensor flagged nonneg has negative entries")
        data.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "nonneg", bool(self.nonneg))

    @classmethod
    def from_array(cls, array, nonneg: bool | None = None) -> "Tensor":
        array = np.asarray(array, dtype=float)
        if nonneg is None:
            nonneg = bool(np.all(array >= 0))
        return cls(array.shape, array.reshape(-1), nonneg)

    @classmethod
    def zeros(cls, shape, nonneg: bool = True) -> "Tensor":
        shape = check_shape(shape)
        return cls(shape, np.zeros(int(np.prod(shape))), nonneg)

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def ambient_dim(self) -> int:
        return int(np.prod(self.shape))

    @property
    def array(self) -> np.ndarray:
        """Read-only d-way view of the data."""
        return self.data.reshape(self.shape)

    def entry(self, *index: int) -> float:
        """Entry at a 1-based multi-index."""
        return float(self.array[tuple(i - 1 for i in index)])

    def norm(self) -> float:
        return frobenius_norm(self)

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "data": self.data.tolist(),
                "nonneg": self.nonneg}

    @classmethod
    def from_dict(cls, obj: dict) -> "Tensor":
        return cls(tuple(obj["shape"]), np.asarray(obj["data"], dtype=float),
                   bool(obj.get("nonneg", False)))

    def __eq__(self, other):
        if not isinstance(other, Tensor):
            return NotImplemented
        return (self.shape == other.shape and self.nonneg == other.nonneg
                and np.array_equal(self.data, other.data))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, nonneg={self.nonneg})"


@dataclass(frozen=True, eq=False)
class RankOneTerm:
    """Outer product of one factor vector per mode."""

    factors: tuple[np.ndarray, ...]

    def __post_init__(self):
        factors = []
        for f in self.factors:
            f = np.array(f, dtype=float).reshape(-1)
            f.setflags(write=False)
            factors.append(f)
        object.__setattr__(self, "factors", tuple(factors))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    def is_zero(self) -> bool:
        return any(not np.any(f) for f in self.factors)

    def full(self) -> np.ndarray:
        out = self.factors[0]
        for f in self.factors[1:]:
            out = np.multiply.outer(out, f)
        return out

    def __eq__(self, other):
        if not isinstance(other, RankOneTerm):
            return NotImplemented
        return (len(self.factors) == len(other.factors)
                and all(np.array_equal(a, b)
                        for a, b in zip(self.factors, other.factors)))


@dataclass(frozen=True, eq=False)
class Decomposition:
    """An ordered list of rank-one terms of a common shape."""

    shape: tuple[int, ...]
    terms: tuple[RankOneTerm, ...] = field(default_factory=tuple)
    mode: str = "real"

    def __post_init__(self):
        shape = check_shape(self.shape)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        terms = tuple(t if isinstance(t, RankOneTerm) else RankOneTerm(t)
                      for t in self.terms)
        for t in terms:
            if t.shape != shape:
                raise ShapeError(
                    f"term shape {t.shape} does not match declared {shape}")
            if self.mode == "nonnegative" and any(np.any(f < 0)
                                                  for f in t.factors):
                raise ValueError("nonnegative decomposition has negative "
                                 "factor entries")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def from_factor_matrices(cls, factors, mode: str = "real"):
        """Build from a list of ``(n_k, r)`` factor matrices."""
        mats = [np.asarray(f, dtype=float) for f in factors]
        r = mats[0].shape[1]
        if any(m.ndim != 2 or m.shape[1] != r for m in mats):
            raise ShapeError("factor matrices must be 2-D with equal columns")
        shape = tuple(m.shape[0] for m in mats)
        terms = [RankOneTerm([m[:, i] for m in mats]) for i in range(r)]
        return cls(shape, tuple(terms), mode)

    @property
    def rank(self) -> int:
        return len(self.terms)

    @property
    def order(self) -> int:
        return len(self.shape)

    def factor_matrices(self) -> list[np.ndarray]:
        return [np.column_stack([t.factors[k] for t in self.terms])
                if self.terms else np.zeros((n, 0))
                for k, n in enumerate(self.shape)]

    def to_dict(self) -> dict:
        return {"shape": list(self.shape), "mode": self.mode,
                "terms": [{"factors": [f.tolist() for f in t.factors]}
                          for t in self.terms]}

    @classmethod
    def from_dict(cls, obj: dict) -> "Decomposition":
        terms = [RankOneTerm(t["factors"]) for t in obj["terms"]]
        return cls(tuple(obj["shape"]), tuple(terms),
                   obj.get("mode", "real"))

    def __eq__(self, other):
        if not isinstance(other, Decomposition):
            return NotImplemented
        return (self.shape == other.shape and self.mode == other.mode
                and self.terms == other.terms)

    def __repr__(self):
        return (f"Decomposition(shape={self.shape}, rank={self.rank}, "
                f"mode={self.mode!r})")


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    assignment: tuple[int, ...]
    max_term_distance: float


def _check_same_shape(A: Tensor, B: Tensor):
    if A.shape != B.shape:
        raise ShapeError(f"shape mismatch: {A.shape} vs {B.shape}")


def evaluate(decomp: Decomposition) -> Tensor:
    """Sum of the outer products of the terms."""
    out = np.zeros(decomp.shape)
    for term in decomp.terms:
        out += term.full()
    return Tensor(decomp.shape, out.reshape(-1),
                  nonneg=decomp.mode == "nonnegative")


def inner_product(A: Tensor, B: Tensor) -> float:
    _check_same_shape(A, B)
    return float(np.dot(A.data, B.data))


def frobenius_norm(A: Tensor) -> float:
    return float(np.sqrt(inner_product(A, A)))


def direct_sum(A: Tensor, B: Tensor) -> Tensor:
    """Block-diagonal embedding of ``A`` and ``B`` into the summed shape.

    ``A`` occupies the leading block in every mode and ``B`` the trailing
    one; all mixed blocks are zero.
    """
    if A.order != B.order:
        raise ShapeError(f"order mismatch: {A.order} vs {B.order}")
    shape = tuple(a + b for a, b in zip(A.shape, B.shape))
    out = np.zeros(shape)
    out[tuple(slice(0, a) for a in A.shape)] = A.array
    out[tuple(slice(a, None) for a in A.shape)] = B.array
    return Tensor(shape, out.reshape(-1), A.nonneg and B.nonneg)


def pad_zeros(A: Tensor, shape) -> Tensor:
    """Embed ``A`` into the leading block of a larger shape."""
    shape = check_shape(shape)
    if len(shape) != A.order or any(s < a for s, a in zip(shape, A.shape)):
        raise ShapeError(f"cannot pad {A.shape} to {shape}")
    out = np.zeros(shape)
    out[tuple(slice(0, a) for a in A.shape)] = A.array
    return Tensor(shape, out.reshape(-1), A.nonneg)


def embed_term(term: RankOneTerm, shape, offsets) -> RankOneTerm:
    """Zero-pad each factor of ``term`` so it sits at ``offsets`` in ``shape``."""
    factors = []
    for f, n, o in zip(term.factors, shape, offsets):
        g = np.zeros(n)
        g[o:o + f.size] = f
        factors.append(g)
    return RankOneTerm(factors)


def absorb_vector(A: Tensor, u) -> Tensor:
    """Return ``A ⊗ u`` (one extra trailing mode)."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size == 0 or not np.any(u):
        raise ValueError("absorbed vector must be nonzero")
    if A.nonneg and np.any(u < 0):
        raise ValueError("absorbed vector must be nonnegative for a "
                         "nonnegative tensor")
    out = np.multiply.outer(A.array, u)
    return Tensor(out.shape, out.reshape(-1), A.nonneg)


def _check_mode(A: Tensor, mode: int) -> int:
    if not 0 <= mode < A.order:
        raise IndexError(f"mode {mode} out of range for order {A.order}")
    return mode


def mode_slices(A: Tensor, mode: int) -> list[np.ndarray]:
    """Sections of ``A`` with the index of ``mode`` fixed (0-based mode)."""
    _check_mode(A, mode)
    arr = np.moveaxis(A.array, mode, 0)
    return [np.array(arr[k]) for k in range(A.shape[mode])]


def flatten(A: Tensor, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding: that index on rows, the rest row-major."""
    _check_mode(A, mode)
    return np.moveaxis(A.array, mode, 0).reshape(A.shape[mode], -1)


def _canonical_term(term: RankOneTerm, mode: str) -> RankOneTerm:
    factors = list(term.factors)
    scale = 1.0
    for k in range(len(factors) - 1):
        f = factors[k]
        nrm = np.linalg.norm(f)
        if nrm == 0:
            raise ValueError("cannot canonicalize a zero term")
        # already-normalized factors are left bit-identical (idempotence)
        if abs(nrm - 1.0) > _NORM_SLACK:
            f = f / nrm
            scale *= nrm
        if mode == "real":
            lead = f[np.flatnonzero(f)[0]]
            if lead < 0:
                f = -f
                scale = -scale
        factors[k] = f
    last = factors[-1] * scale
    if not np.any(last):
        raise ValueError("cannot canonicalize a zero term")
    factors[-1] = last
    return RankOneTerm(factors)


def canonicalize(decomp: Decomposition) -> Decomposition:
    """Normal form up to term order and scaling gauge.

    Every factor but the last has unit norm (and nonnegative leading nonzero
    entry in real mode); the magnitude lives in the last factor. Terms are
    sorted lexicographically by their concatenated factor entries.
    """
    terms = [_canonical_term(t, decomp.mode) for t in decomp.terms]
    terms.sort(key=lambda t: tuple(np.concatenate(t.factors)))
    return Decomposition(decomp.shape, tuple(terms), decomp.mode)


def match_decompositions(D1: Decomposition, D2: Decomposition,
                         tol: float = 1e-8) -> MatchResult:
    """Optimal one-to-one matching of terms by evaluated-term distance.

    ``assignment[i - 1]`` is the 1-based index of the term of ``D2``
    matched to term ``i`` of ``D1`` (input orders).
    """
    if D1.shape != D2.shape:
        raise ShapeError(f"shape mismatch: {D1.shape} vs {D2.shape}")
    if D1.rank != D2.rank:
        raise ShapeError(f"term count mismatch: {D1.rank} vs {D2.rank}")
    if D1.rank == 0:
        return MatchResult(True, (), 0.0)
    T1 = np.array([t.full().reshape(-1) for t in D1.terms])
    T2 = np.array([t.full().reshape(-1) for t in D2.terms])
    cost = np.linalg.norm(T1[:, None, :] - T2[None, :, :], axis=2)
    rows, cols = linear_sum_assignment(cost)
    dist = float(cost[rows, cols].max())
    assignment = tuple(int(c) + 1 for c in cols[np.argsort(rows)])
    return MatchResult(dist <= tol, assignment, dist)


def load_json(path):
    with open(path) as fh:
        obj = json.load(fh)
    if "terms" in obj:
        return Decomposition.from_dict(obj)
    return Tensor.from_dict(obj)


def dump_json(obj, path=None) -> str:
    text = json.dumps(obj.to_dict())
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text
