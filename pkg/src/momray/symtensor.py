"""Symmetric tensors stored by canonical (non-decreasing) multi-index.

A rank-``m`` symmetric tensor in dimension ``n`` has ``binom(m+n-1, m)``
independent components. Components are stored in a flat array ordered like
``itertools.combinations_with_replacement(range(n), m)``. Axis labels are
0-based throughout the package (axis 0 is the distinguished "first" axis).

Every pointwise operation is a fixed linear map between component vectors,
so the maps are built once as small matrices and reused, both for single
tensors and for whole sampled fields (component axis last).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "MultiIndex",
    "SymTensor",
    "canonical_indices",
    "component_count",
    "multiplicities",
    "symmetrize",
    "i_delta",
    "j_delta",
    "i_delta_pow",
    "inner",
    "decompose",
    "isotropy_split",
    "contract",
    "delta",
    "i_delta_matrix",
    "j_delta_matrix",
    "contract_matrix",
    "decompose_matrix",
    "contraction_weights",
]


class MultiIndex(tuple):
    """Tuple of axis indices compared up to permutation."""

    def __new__(cls, entries):
        return super().__new__(cls, tuple(sorted(int(e) for e in entries)))

    @property
    def rank(self):
        return len(self)

    def multiplicity(self):
        """Number of distinct orderings of this index."""
        return _orbit_size(tuple(self))


def _orbit_size(idx):
    counts = np.bincount(idx) if idx else np.zeros(0, dtype=int)
    out = math.factorial(len(idx))
    for c in counts:
        out //= math.factorial(int(c))
    return out


def component_count(m, n):
    return math.comb(m + n - 1, m)


@lru_cache(maxsize=None)
def canonical_indices(m, n):
    return tuple(itertools.combinations_with_replacement(range(n), m))


@lru_cache(maxsize=None)
def _position(m, n):
    return {idx: k for k, idx in enumerate(canonical_indices(m, n))}


@lru_cache(maxsize=None)
def _multiplicities(m, n):
    mult = np.array([_orbit_size(idx) for idx in canonical_indices(m, n)], dtype=float)
    mult.setflags(write=False)
    return mult


def multiplicities(m, n):
    """Orbit sizes of the canonical indices (weights of the full index sum)."""
    return _multiplicities(m, n)


def _check_dims(m, n):
    if m < 0:
        raise ValueError(f"rank must be non-negative, got {m}")
    if n < 1:
        raise ValueError(f"dimension must be positive, got {n}")


# --------------------------------------------------------------------------
# linear maps between component vectors


@lru_cache(maxsize=None)
def i_delta_matrix(m, n):
    """Matrix of f -> sym(f (x) delta), rank m -> m+2, averaging symmetrization.

    Averaging over placements of the delta factor: each unordered pair of the
    m+2 slots is equally likely, and only pairs carrying equal labels survive.
    """
    _check_dims(m, n)
    rows = canonical_indices(m + 2, n)
    pos = _position(m, n)
    out = np.zeros((len(rows), component_count(m, n)))
    npairs = math.comb(m + 2, 2)
    for r, J in enumerate(rows):
        for p, q in itertools.combinations(range(m + 2), 2):
            if J[p] == J[q]:
                rest = J[:p] + J[p + 1:q] + J[q + 1:]
                out[r, pos[rest]] += 1.0 / npairs
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def j_delta_matrix(m, n):
    """Matrix of the trace over the last two slots, rank m -> m-2."""
    if m < 2:
        raise ValueError(f"j_delta needs rank >= 2, got {m}")
    rows = canonical_indices(m - 2, n)
    pos = _position(m, n)
    out = np.zeros((len(rows), component_count(m, n)))
    for r, I in enumerate(rows):
        for k in range(n):
            out[r, pos[tuple(sorted(I + (k, k)))]] += 1.0
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def contract_matrix(m, n, axis):
    """Matrix of f -> f_{i_1..i_{m-1} axis}, rank m -> m-1."""
    if m < 1:
        raise ValueError("cannot contract a scalar")
    if not 0 <= axis < n:
        raise ValueError(f"axis {axis} out of range for dimension {n}")
    rows = canonical_indices(m - 1, n)
    pos = _position(m, n)
    out = np.zeros((len(rows), component_count(m, n)))
    for r, I in enumerate(rows):
        out[r, pos[tuple(sorted(I + (axis,)))]] = 1.0
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def i_delta_pow_matrix(m, n, p):
    out = np.eye(component_count(m, n))
    for s in range(p):
        out = i_delta_matrix(m + 2 * s, n) @ out
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def decompose_matrix(m, n):
    """Matrix mapping f (rank m) to v (rank m-2) with f = g + i_delta(v), j_delta(g) = 0.

    v solves the weighted normal equations, which coincide with
    j_delta(i_delta v) = j_delta f because j_delta is the adjoint of i_delta.
    """
    if m < 2:
        raise ValueError(f"decompose needs rank >= 2, got {m}")
    A = i_delta_matrix(m - 2, n)
    W = multiplicities(m, n)
    gram = A.T @ (W[:, None] * A)
    out = np.linalg.solve(gram, A.T * W[None, :])
    out.setflags(write=False)
    return out


def contraction_weights(m, xi):
    """Weights c such that sum_c c[..., k] f_k = f_{i_1..i_m} xi^{i_1}..xi^{i_m}.

    ``xi`` has shape (..., n); the result has shape (..., ncomp).
    """
    xi = np.asarray(xi)
    n = xi.shape[-1]
    idx = canonical_indices(m, n)
    mult = multiplicities(m, n)
    out = np.empty(xi.shape[:-1] + (len(idx),), dtype=np.result_type(xi, float))
    for c, I in enumerate(idx):
        term = np.full(xi.shape[:-1], mult[c], dtype=out.dtype)
        for a in I:
            term = term * xi[..., a]
        out[..., c] = term
    return out


# --------------------------------------------------------------------------
# tensors


@dataclass(frozen=True, eq=False)
class SymTensor:
    """A single symmetric tensor. ``data`` holds the canonical components."""

    rank: int
    dim: int
    data: np.ndarray

    def __post_init__(self):
        _check_dims(self.rank, self.dim)
        data = np.array(self.data, dtype=np.result_type(self.data, float))
        if data.shape != (component_count(self.rank, self.dim),):
            raise ValueError(
                f"rank {self.rank} tensor in dimension {self.dim} needs "
                f"{component_count(self.rank, self.dim)} components, got shape {data.shape}"
            )
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def zeros(cls, rank, dim, dtype=float):
        return cls(rank, dim, np.zeros(component_count(rank, dim), dtype=dtype))

    @classmethod
    def scalar(cls, value, dim):
        return cls(0, dim, np.array([value]))

    @classmethod
    def from_components(cls, rank, dim, comps):
        """Build from a mapping {index tuple: value}; missing entries are zero."""
        out = np.zeros(component_count(rank, dim), dtype=np.result_type(*comps.values(), float))
        pos = _position(rank, dim)
        for idx, val in comps.items():
            out[pos[tuple(sorted(idx))]] = val
        return cls(rank, dim, out)

    @classmethod
    def random(cls, rank, dim, rng):
        return cls(rank, dim, rng.standard_normal(component_count(rank, dim)))

    def __getitem__(self, idx):
        idx = (idx,) if np.isscalar(idx) else tuple(idx)
        if len(idx) != self.rank:
            raise IndexError(f"expected {self.rank} indices, got {len(idx)}")
        return self.data[_position(self.rank, self.dim)[tuple(sorted(idx))]]

    def components(self):
        return dict(zip(canonical_indices(self.rank, self.dim), self.data))

    def dense(self):
        out = np.zeros((self.dim,) * self.rank, dtype=self.data.dtype)
        for I, val in zip(canonical_indices(self.rank, self.dim), self.data):
            for perm in set(itertools.permutations(I)):
                out[perm] = val
        return out

    def norm(self):
        return float(np.sqrt(np.sum(multiplicities(self.rank, self.dim) * np.abs(self.data) ** 2)))

    def _same_shape(self, other):
        if not isinstance(other, SymTensor) or (other.rank, other.dim) != (self.rank, self.dim):
            raise ValueError("tensors must share rank and dimension")

    def __add__(self, other):
        self._same_shape(other)
        return SymTensor(self.rank, self.dim, self.data + other.data)

    def __sub__(self, other):
        self._same_shape(other)
        return SymTensor(self.rank, self.dim, self.data - other.data)

    def __neg__(self):
        return SymTensor(self.rank, self.dim, -self.data)

    def __mul__(self, c):
        return SymTensor(self.rank, self.dim, self.data * c)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SymTensor(rank={self.rank}, dim={self.dim}, data={self.data!r})"


def delta(n):
    """The Kronecker tensor, i.e. i_delta of the scalar 1."""
    return i_delta(SymTensor.scalar(1.0, n))


def symmetrize(t, dim=None):
    """Average a dense rank-m array over all index permutations.

    ``dim`` is only needed for 0-d input, where it cannot be inferred.
    """
    t = np.asarray(t)
    m = t.ndim
    if m == 0:
        if dim is None:
            raise ValueError("dimension of a scalar must be given explicitly")
        return SymTensor(0, dim, t.reshape(1))
    n = t.shape[0]
    if dim is not None and dim != n:
        raise ValueError(f"array axes have length {n}, expected {dim}")
    if any(s != n for s in t.shape):
        raise ValueError(f"all axes must have equal length, got shape {t.shape}")
    out = np.empty(component_count(m, n), dtype=np.result_type(t, float))
    for c, I in enumerate(canonical_indices(m, n)):
        orbit = set(itertools.permutations(I))
        out[c] = sum(t[p] for p in orbit) / len(orbit)
    return SymTensor(m, n, out)


def i_delta(f):
    return SymTensor(f.rank + 2, f.dim, i_delta_matrix(f.rank, f.dim) @ f.data)


def i_delta_pow(f, p):
    if p < 0:
        raise ValueError("power must be non-negative")
    return SymTensor(f.rank + 2 * p, f.dim, i_delta_pow_matrix(f.rank, f.dim, p) @ f.data)


def j_delta(f):
    if f.rank < 2:
        raise ValueError(f"j_delta needs rank >= 2, got {f.rank}")
    return SymTensor(f.rank - 2, f.dim, j_delta_matrix(f.rank, f.dim) @ f.data)


def contract(f, axis):
    """f_{i_1..i_{m-1} axis}: fix one slot to ``axis``."""
    return SymTensor(f.rank - 1, f.dim, contract_matrix(f.rank, f.dim, axis) @ f.data)


def inner(u, w):
    """Full index sum of u * w (bilinear, no conjugation)."""
    u._same_shape(w)
    return np.sum(multiplicities(u.rank, u.dim) * u.data * w.data)


def decompose(f):
    """Split f = g + i_delta(v) with j_delta(g) = 0. Returns (g, v)."""
    if f.rank < 2:
        raise ValueError(f"decompose needs rank >= 2, got {f.rank}")
    v = SymTensor(f.rank - 2, f.dim, decompose_matrix(f.rank, f.dim) @ f.data)
    return f - i_delta(v), v


def isotropy_split(f, tol=1e-10):
    """Largest l with f = i_delta^l(core), and that core.

    The trace-free part is compared with ``tol`` relative to the norm of the
    tensor being peeled at each stage.
    """
    level, core = 0, f
    while core.rank >= 2:
        scale = core.norm()
        if scale == 0.0:
            break
        g, v = decompose(core)
        if g.norm() > tol * scale:
            break
        level, core = level + 1, v
    return level, core
