"""Kernel of the moment transforms restricted to unit directions.

Restricting I^{m,k} to the unit sphere bundle loses information for m >= 2:
any bundle whose top even and top odd parts are minus i_delta of the lifted
lower parts is invisible. This module builds the objects used to test that
characterization numerically:

* :class:`SliceField`, a tensor field sampled on a slice {x_axis = const} in
  polar coordinates (r, theta) about a center outside the support,
* :func:`moment_conditions`, the weighted r-integrals against the null
  vector nu = e_axis + i e_r,
* :func:`construct_v`, the explicit tensor v with f = i_delta v,
* :func:`build_G`, the even and odd lifted sums of a bundle,
* :func:`plancherel_check`, the positivity relation behind the uniqueness of
  the trace-free part,
* :func:`kernel_membership`, forward and reverse tests of kernel membership.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import symtensor as st
from .fields import BlobField, TensorBundle
from .raytransform import DEFAULT_QUADRATURE, QuadratureSpec, bundle_moments

__all__ = [
    "SliceField",
    "sphere_directions",
    "null_vector",
    "moment_conditions",
    "construct_v",
    "construct_v_matrix",
    "tilde_parts",
    "build_G",
    "kernel_part",
    "kernel_member",
    "plancherel_constraints",
    "plancherel_check",
    "PlancherelResult",
    "KernelVerdict",
    "kernel_membership",
    "sphere_rays",
]


def _others(n, axis):
    if not 0 <= axis < n:
        raise ValueError(f"axis {axis} out of range for dimension {n}")
    return [b for b in range(n) if b != axis]


def sphere_directions(dim, count):
    """Roughly uniform unit vectors in R^dim (the sphere S^{dim-1}).

    dim 1 gives the two points +-1, dim 2 equispaced angles, dim 3 a
    Fibonacci lattice.
    """
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = 2 * np.pi * np.arange(count) / count
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5**0.5) * i
        s = np.sqrt(1 - z * z)
        return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])
    raise ValueError("directions are provided for slices of dimension 1 to 3")


def null_vector(theta, axis=0):
    """nu = e_axis + i e_r for slice directions theta (T, n-1) -> (T, n) complex.

    nu . nu = 1 - |theta|^2 vanishes for unit theta.
    """
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    n = theta.shape[1] + 1
    others = _others(n, axis)
    nu = np.zeros((theta.shape[0], n), dtype=complex)
    nu[:, axis] = 1.0
    nu[:, others] = 1j * theta
    return nu


# --------------------------------------------------------------------------
# slice fields


@dataclass(frozen=True, eq=False)
class SliceField:
    """Symmetric tensor field on {x_axis = x1} sampled at (r, theta).

    The sample at (r_j, theta_t) sits at the point with coordinate ``x1`` on
    ``axis`` and ``center + r_j theta_t`` on the remaining axes. ``values``
    has shape (T, R, ncomp); ``weights`` are quadrature weights in r.
    """

    rank: int
    dim: int
    x1: float
    center: np.ndarray
    radii: np.ndarray
    weights: np.ndarray
    thetas: np.ndarray
    values: np.ndarray
    axis: int = 0

    def __post_init__(self):
        n = self.dim
        if n < 2:
            raise ValueError("slices need dimension at least 2")
        if np.asarray(self.center).shape != (n - 1,):
            raise ValueError(f"center must have {n - 1} coordinates")
        if np.asarray(self.thetas).ndim != 2 or np.asarray(self.thetas).shape[1] != n - 1:
            raise ValueError(f"theta directions must have shape (T, {n - 1})")
        expect = (len(self.thetas), len(self.radii), st.component_count(self.rank, n))
        if np.asarray(self.values).shape != expect:
            raise ValueError(f"values must have shape {expect}")
        if np.any(np.asarray(self.radii) <= 0):
            raise ValueError("polar radii must be positive")

    @property
    def ncomp(self):
        return st.component_count(self.rank, self.dim)

    @staticmethod
    def sample_points(dim, x1, center, radii, thetas, axis=0):
        """Cartesian points (T, R, dim) of the polar samples."""
        thetas = np.atleast_2d(thetas)
        pts = np.empty((thetas.shape[0], len(radii), dim))
        pts[..., axis] = x1
        pts[..., _others(dim, axis)] = np.asarray(center)[None, None] + radii[None, :, None] * thetas[:, None, :]
        return pts

    @classmethod
    def from_function(cls, rank, dim, func, x1=0.0, center=None, thetas=None, r_max=None,
                      quad=QuadratureSpec(32, 8), support_radius=None, axis=0):
        """Sample ``func(points (..., dim)) -> (..., ncomp)`` on a polar slice.

        The radial rule is composite Gauss-Legendre on (0, r_max]. When
        ``support_radius`` is given the center must lie outside that ball and
        ``r_max`` defaults to |center| + support_radius.
        """
        center = np.zeros(dim - 1) if center is None else np.asarray(center, dtype=float)
        if support_radius is not None:
            if x1**2 + center @ center <= support_radius**2:
                raise ValueError("the polar center must lie outside the support ball")
            r_max = r_max or float(np.linalg.norm(center)) + support_radius
        if r_max is None or r_max <= 0:
            raise ValueError("r_max must be positive")
        thetas = sphere_directions(dim - 1, 16) if thetas is None else np.atleast_2d(np.asarray(thetas, float))
        x, w = quad.rule()
        h = r_max / quad.panels
        lo = h * np.arange(quad.panels)
        radii = (lo[:, None] + 0.5 * h * (x[None] + 1)).ravel()
        weights = np.tile(0.5 * h * w, quad.panels)
        pts = cls.sample_points(dim, x1, center, radii, thetas, axis)
        values = np.asarray(func(pts))
        return cls(rank, dim, float(x1), center, radii, weights, thetas, values, axis)

    @classmethod
    def from_field(cls, f, x1=0.0, center=None, thetas=None, quad=QuadratureSpec(32, 8), axis=0):
        """Polar samples of a tensor field; the center defaults to a point just outside its support."""
        R = f.support_radius
        if center is None:
            center = np.zeros(f.dim - 1)
            center[0] = 1.25 * R + 0.1
        return cls.from_function(f.rank, f.dim, f.evaluate, x1, center, thetas, quad=quad,
                                 support_radius=R, axis=axis)

    def map_components(self, matrix, rank):
        return SliceField(rank, self.dim, self.x1, self.center, self.radii, self.weights, self.thetas,
                          self.values @ np.asarray(matrix).T, self.axis)

    def points(self):
        return self.sample_points(self.dim, self.x1, self.center, self.radii, self.thetas, self.axis)


def moment_conditions(f, alphas=None):
    """Integrals of r^alpha f(r, theta) nu^m over r, shape (len(alphas), T), complex.

    ``alphas`` defaults to 0..m.
    """
    m = f.rank
    alphas = range(m + 1) if alphas is None else alphas
    alphas = np.asarray(list(alphas), dtype=int)
    if np.any(alphas < 0) or np.any(alphas > m):
        raise ValueError(f"moment orders must lie in 0..{m}")
    nu = null_vector(f.thetas, f.axis)
    cw = st.contraction_weights(m, nu)  # (T, ncomp)
    profile = np.einsum("trc,tc->tr", f.values, cw)
    rpow = f.radii[None, :] ** alphas[:, None] * f.weights[None, :]
    return rpow @ profile.T


# --------------------------------------------------------------------------
# the explicit projector


def _tilde_matrix(m, n, q, axis):
    """Rows map f (rank m, dim n) to binom(m, q) f_{J axis..axis} over J in the other axes."""
    O = _others(n, axis)
    pos = {I: i for i, I in enumerate(st.canonical_indices(m, n))}
    J = st.canonical_indices(q, n - 1)
    out = np.zeros((len(J), len(pos)))
    for r, idx in enumerate(J):
        full = tuple(sorted(tuple(O[j] for j in idx) + (axis,) * (m - q)))
        out[r, pos[full]] = math.comb(m, q)
    return out


def tilde_parts(g, axis=0):
    """The pieces g~^q = binom(m, q) g_{J axis..axis}, q = 0..m, as tensors in dimension n-1."""
    if g.dim < 2:
        raise ValueError("splitting off an axis needs dimension at least 2")
    return [st.SymTensor(q, g.dim - 1, _tilde_matrix(g.rank, g.dim, q, axis) @ g.data) for q in range(g.rank + 1)]


@lru_cache(maxsize=None)
def construct_v_matrix(m, n, axis=0):
    """Linear map f -> v (rank m-2) of the explicit projector formula."""
    if m < 2:
        raise ValueError(f"construct_v needs rank >= 2, got {m}")
    O = _others(n, axis)
    pos = {I: i for i, I in enumerate(st.canonical_indices(m - 2, n))}
    out = np.zeros((len(pos), st.component_count(m, n)))
    for p in range(m - 1):
        block = np.zeros((st.component_count(p, n - 1), out.shape[1]))
        for l in range(1, (p + 2) // 2 + 1):
            q = p + 2 - 2 * l
            block += (-1) ** (l - 1) * st.i_delta_pow_matrix(q, n - 1, l - 1) @ _tilde_matrix(m, n, q, axis)
        block /= math.comb(m - 2, m - p - 2)
        for r, J in enumerate(st.canonical_indices(p, n - 1)):
            out[pos[tuple(sorted(tuple(O[j] for j in J) + (axis,) * (m - 2 - p)))]] = block[r]
    out.setflags(write=False)
    return out


def construct_v(f, axis=0):
    """The tensor v of rank m-2 with f = i_delta v whenever f lies in the image of i_delta.

    Works on a :class:`~momray.symtensor.SymTensor`, a :class:`SliceField` or
    any tensor field supporting ``map_components``. Only the components of f
    with at most m-2 indices off ``axis`` enter.
    """
    if f.rank < 2:
        raise ValueError(f"construct_v needs rank >= 2, got {f.rank}")
    mat = construct_v_matrix(f.rank, f.dim, axis)
    if isinstance(f, st.SymTensor):
        return st.SymTensor(f.rank - 2, f.dim, mat @ f.data)
    return f.map_components(mat, f.rank - 2)


# --------------------------------------------------------------------------
# even / odd lifted sums


def _lifted_sum(parts, top):
    """sum over parts p of i_delta^{(top - rank p)/2} p, or None when empty."""
    acc = None
    for part in parts:
        term = part.i_delta((top - part.rank) // 2) if part.rank < top else part
        acc = term if acc is None else acc + term
    return acc


def build_G(F):
    """The lifted sums G1 (even ranks, rank 2[m/2]) and G2 (odd ranks, rank 2[(m-1)/2]+1).

    G2 is None for m = 0.
    """
    m = F.max_rank
    even = [F.parts[p] for p in range(0, m + 1, 2)]
    odd = [F.parts[p] for p in range(1, m + 1, 2)]
    G1 = _lifted_sum(even, 2 * (m // 2))
    G2 = _lifted_sum(odd, 2 * ((m - 1) // 2) + 1) if odd else None
    return G1, G2


def kernel_part(F, parity):
    """v with top part = i_delta(v) + G, parity 0 (even chain) or 1 (odd chain).

    This is minus the lifted sum of the lower parts of the chain; the bundle
    is in the kernel exactly when both chains have top part = i_delta(v).
    Returns None when the chain has fewer than two ranks.
    """
    m = F.max_rank
    top = 2 * (m // 2) if parity == 0 else 2 * ((m - 1) // 2) + 1
    lower = [F.parts[p] for p in range(parity, top - 1, 2)]
    if top < 2 or not lower:
        return None
    return -_lifted_sum(lower, top - 2)


def kernel_member(lower):
    """Complete chosen lower parts to a bundle in the sphere-bundle kernel.

    ``lower`` is a bundle of max rank m (m >= 2); its two top chain parts
    are replaced by minus i_delta of the lifted lower sums.
    """
    m = lower.max_rank
    if m < 2:
        raise ValueError("only the zero bundle is invisible for m < 2")
    parts = list(lower.parts)
    for parity in (0, 1):
        top = 2 * (m // 2) if parity == 0 else 2 * ((m - 1) // 2) + 1
        if top < 2:
            # a chain with a single rank must vanish
            parts[top] = parts[top].scaled(0.0)
            continue
        parts[top] = kernel_part(lower, parity).i_delta()
    return TensorBundle(parts)


# --------------------------------------------------------------------------
# Plancherel-type relation


def _chain_relation_matrix(m, n, q, axis):
    """Rows of g~^q - sum_l (-1)^{l+1} i_delta'^l g~^{q-2l} as a map from g."""
    R = _tilde_matrix(m, n, q, axis).copy()
    for l in range(1, q // 2 + 1):
        R -= (-1) ** (l + 1) * st.i_delta_pow_matrix(q - 2 * l, n - 1, l) @ _tilde_matrix(m, n, q - 2 * l, axis)
    return R


def plancherel_constraints(m, n, axis=0):
    """Stacked linear constraints on g: j_delta g = 0 and both top chain relations."""
    blocks = [st.j_delta_matrix(m, n)] if m >= 2 else []
    for q in (m, m - 1):
        if q >= 0:
            blocks.append(_chain_relation_matrix(m, n, q, axis))
    return np.vstack(blocks)


@dataclass
class PlancherelResult:
    lhs: float
    chains: list = field(default_factory=list)


def plancherel_check(g, axis=0):
    """Sum of squares forced to vanish by the chain relations.

    For each chain top q in {m, m-1} this evaluates
    <g~^q, g~^q> + sum_l (c_q / c_{q-2l}) <g~^{q-2l}, g~^{q-2l}> with
    c_p = binom(m, p); for q = m the weights are d_{q-2l} = 1 / c_{q-2l}.
    When j_delta g = 0 each chain value equals ``pairing``, the inner product
    of g~^q with the residual of its chain relation, so it vanishes once the
    relation holds. Every summand is reported.
    """
    m, n = g.rank, g.dim
    tildes = tilde_parts(g, axis)
    chains = []
    for q in (m, m - 1):
        if q < 0:
            continue
        summands = {q: float(np.sum(st.multiplicities(q, n - 1) * np.abs(tildes[q].data) ** 2))}
        coef = {q: 1.0}
        for l in range(1, q // 2 + 1):
            p = q - 2 * l
            coef[p] = math.comb(m, q) / math.comb(m, p)
            summands[p] = coef[p] * float(np.sum(st.multiplicities(p, n - 1) * np.abs(tildes[p].data) ** 2))
        resid = _chain_relation_matrix(m, n, q, axis) @ g.data
        pairing = float(np.real(np.sum(st.multiplicities(q, n - 1) * np.conj(tildes[q].data) * resid)))
        chains.append({"top": q, "lhs": sum(summands.values()), "summands": summands,
                       "coefficients": coef, "pairing": pairing})
    return PlancherelResult(sum(c["lhs"] for c in chains), chains)


# --------------------------------------------------------------------------
# membership


def sphere_rays(n, count, radius, rng):
    """Random lines meeting the ball of ``radius``: base points orthogonal to unit directions."""
    theta = rng.standard_normal((count, n))
    theta /= np.linalg.norm(theta, axis=1, keepdims=True)
    p = rng.standard_normal((count, n))
    p *= (radius * rng.uniform(0, 1, count) ** (1 / n) / np.linalg.norm(p, axis=1))[:, None]
    X = p - np.sum(p * theta, axis=1, keepdims=True) * theta
    return X, theta


def _probe_points(F, count, rng):
    R = max(F.support_radius, 1e-12)
    n = F.dim
    d = rng.standard_normal((count, n))
    d *= (R * rng.uniform(0, 1, count) ** (1 / n) / np.linalg.norm(d, axis=1))[:, None]
    extra = [p.centers for p in F.parts if isinstance(p, BlobField) and p.nblobs]
    if extra:
        d = np.vstack([d] + extra)
    return d


def _tensor_norms(field_, pts):
    if field_ is None:
        return np.zeros(len(pts))
    vals = field_.evaluate(pts)
    w = st.multiplicities(field_.rank, field_.dim)
    return np.sqrt(np.sum(w * np.abs(vals) ** 2, axis=-1))


@dataclass
class KernelVerdict:
    """Outcome of :func:`kernel_membership`; ``in_kernel`` is the forward verdict."""

    in_kernel: bool
    forward: bool
    reverse: bool
    top_moment_only: bool
    agree: bool
    tolerance: float
    per_k_residuals: list
    top_moment_residual: float
    characterization_residuals: dict
    v_fields: dict

    def to_json(self):
        return {
            "in_kernel": self.in_kernel, "forward": self.forward, "reverse": self.reverse,
            "top_moment_only": self.top_moment_only, "agree": self.agree, "tolerance": self.tolerance,
            "per_k_residuals": [float(r) for r in self.per_k_residuals],
            "top_moment_residual": float(self.top_moment_residual),
            "characterization_residuals": {k: float(v) for k, v in self.characterization_residuals.items()},
            "v_fields": self.v_fields,
        }


def kernel_membership(F, rays=None, q=DEFAULT_QUADRATURE, tol=1e-6, n_rays=200, n_points=200, seed=0):
    """Test whether J^{m,k}F = 0 for k = 0..m in three ways.

    * forward: max over k and probe rays of |J^{m,k}F| <= tol,
    * top moment only: the same for k = m alone,
    * reverse: the lifted sums G1 and G2 vanish at probe points, i.e. each
      top chain part equals minus i_delta of the lifted lower parts.

    ``rays`` is an (X, THETA) pair with unit directions; by default random
    lines through the support are drawn from ``seed``. Residuals are
    absolute, so phantoms should be normalized to unit amplitude.
    """
    rng = np.random.default_rng(seed)
    m, n = F.max_rank, F.dim
    R = F.support_radius
    if rays is None:
        X, TH = sphere_rays(n, n_rays, R, rng)
    else:
        X, TH = (np.atleast_2d(np.asarray(a, dtype=float)) for a in rays)
        if np.any(np.abs(np.linalg.norm(TH, axis=1) - 1.0) > 1e-12):
            raise ValueError("sphere-bundle rays need unit directions")
    if R > 0:
        J = bundle_moments(F, X, TH, m, q)
        per_k = np.max(np.abs(J), axis=1)
    else:
        per_k = np.zeros(m + 1)
    forward = bool(np.max(per_k) <= tol)
    top_only = bool(per_k[m] <= tol)

    pts = _probe_points(F, n_points, rng) if R > 0 else np.zeros((1, n))
    G1, G2 = build_G(F)
    char = {"even": float(np.max(_tensor_norms(G1, pts))), "odd": float(np.max(_tensor_norms(G2, pts)))}
    reverse = bool(max(char.values()) <= tol)

    v_fields = {}
    for name, parity in (("even", 0), ("odd", 1)):
        v = kernel_part(F, parity)
        if v is None:
            continue
        top = F.parts[v.rank + 2]
        vv = _tensor_norms(v, pts)
        proj = construct_v(top)
        diff = _tensor_norms(proj - v, pts)
        v_fields[name] = {"rank": v.rank, "max_norm": float(np.max(vv)),
                          "projector_residual": float(np.max(diff))}
    return KernelVerdict(forward, forward, reverse, top_only, forward == reverse == top_only, tol,
                         list(per_k), float(per_k[m]), char, v_fields)
