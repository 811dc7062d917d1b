"""Central finite differences of ray functions in x, xi and along rays.

A ray function maps batches of rays ``(X, XI)`` (shape (N, n) each) to
values of shape (N,) or (K+1, N). Derivatives are taken with respect to
these variables:

* ``("x", a)``   coordinate a of the base point, step ``h_x``
* ``("xi", a)``  coordinate a of the direction, step ``h_xi``
* ``"lam"``      radial scaling xi -> lam * xi at lam = 1, step ``h_xi / |xi|``
* ``"s"``        translation x -> x + s * xi at s = 0, step ``h_x / |xi|``

so ``"lam"`` derivatives of order p realize xi^I d^p/dxi^I summed over all
index tuples, and ``"s"`` derivatives realize powers of <xi, d/dx>.

Mixed derivatives use tensor products of one-dimensional stencils. A
:class:`DerivativePlan` merges the nodes of many derivative terms so every
distinct perturbed ray is evaluated once.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["FDStencil", "central_weights", "DerivativePlan", "derivative", "as_batch"]

MAX_DEPTH = 4


@dataclass(frozen=True)
class FDStencil:
    h_x: float = 1e-2
    h_xi: float = 1e-2
    order: int = 4

    def __post_init__(self):
        if self.h_x <= 0 or self.h_xi <= 0:
            raise ValueError("finite difference steps must be positive")
        if self.order not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")


@lru_cache(maxsize=None)
def central_weights(d, order=4):
    """Integer offsets and weights of the central stencil for the d-th derivative.

    The derivative is ``sum(w * f(x + o * h)) / h**d``.
    """
    if d == 0:
        return (0,), (1.0,)
    npts = 2 * ((d + 1) // 2) - 1 + order
    half = npts // 2
    offsets = np.arange(-half, half + 1)
    V = np.vander(offsets, npts, increasing=True).T.astype(float)
    rhs = np.zeros(npts)
    rhs[d] = math.factorial(d)
    w = np.linalg.solve(V, rhs)
    w[np.abs(w) < 1e-13] = 0.0
    keep = w != 0.0
    return tuple(int(o) for o in offsets[keep]), tuple(float(v) for v in w[keep])


def _var_slot(var, n):
    if var == "lam":
        return 2 * n
    if var == "s":
        return 2 * n + 1
    kind, a = var
    if not 0 <= a < n:
        raise ValueError(f"axis {a} out of range")
    return a if kind == "x" else n + a


def _normalize(spec):
    """Derivative spec (mapping or iterable of variables) -> sorted tuple of (var, count)."""
    if isinstance(spec, dict):
        items = spec.items()
    else:
        counts = {}
        for var in spec:
            counts[var] = counts.get(var, 0) + 1
        items = counts.items()
    return tuple(sorted(((v, int(c)) for v, c in items if c > 0), key=lambda vc: repr(vc[0])))


class DerivativePlan:
    """Several derivative terms of a batch ray function sharing one node set.

    Each term is ``(k, spec)``: the derivative ``spec`` of moment ``k``.
    """

    def __init__(self, terms, n, stencil=FDStencil()):
        self.n, self.stencil = n, stencil
        self.terms = [(int(k), _normalize(spec)) for k, spec in terms]
        nodes = {}
        rows = []
        for _, spec in self.terms:
            depth = sum(c for _, c in spec)
            if depth > MAX_DEPTH:
                raise ValueError(f"derivative depth {depth} exceeds {MAX_DEPTH}")
            factors = [(_var_slot(v, n), central_weights(c, stencil.order)) for v, c in spec]
            row = {}
            for combo in itertools.product(*[list(zip(*f[1])) for f in factors]):
                key = [0] * (2 * n + 2)
                w = 1.0
                for (slot, _), (off, wt) in zip(factors, combo):
                    key[slot] = off
                    w *= wt
                key = tuple(key)
                idx = nodes.setdefault(key, len(nodes))
                row[idx] = row.get(idx, 0.0) + w
            rows.append(row)
        self.nodes = np.array(list(nodes), dtype=float).reshape(len(nodes), 2 * n + 2)
        self.weights = np.zeros((len(self.terms), len(nodes)))
        for t, row in enumerate(rows):
            for idx, w in row.items():
                self.weights[t, idx] = w
        self.max_k = max((k for k, _ in self.terms), default=0)

    @property
    def node_count(self):
        return self.nodes.shape[0]

    def perturbed(self, X, XI):
        """All stencil rays, shape (N, U, n) each."""
        n, st = self.n, self.stencil
        norm = np.linalg.norm(XI, axis=1)
        ox, oxi = self.nodes[:, :n], self.nodes[:, n:2 * n]
        olam, os_ = self.nodes[:, 2 * n], self.nodes[:, 2 * n + 1]
        h_lam = st.h_xi / norm
        h_s = st.h_x / norm
        Xp = (X[:, None, :] + st.h_x * ox[None] + (h_s[:, None] * os_[None])[..., None] * XI[:, None, :])
        XIp = ((1.0 + h_lam[:, None] * olam[None])[..., None] * XI[:, None, :] + st.h_xi * oxi[None])
        return Xp, XIp

    def scales(self, XI):
        """Per-term, per-ray factor 1 / prod(h_var ** count), shape (T, N)."""
        norm = np.linalg.norm(XI, axis=1)
        st = self.stencil
        out = np.ones((len(self.terms), XI.shape[0]))
        for t, (_, spec) in enumerate(self.terms):
            for var, c in spec:
                if var == "lam":
                    h = st.h_xi / norm
                elif var == "s":
                    h = st.h_x / norm
                else:
                    h = np.full_like(norm, st.h_x if var[0] == "x" else st.h_xi)
                out[t] /= h**c
        return out

    def evaluate(self, func, X, XI, batch=200000):
        """Values of every term at every ray, shape (T, N)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        XI = np.atleast_2d(np.asarray(XI, dtype=float))
        N = X.shape[0]
        U = self.node_count
        out = np.zeros((len(self.terms), N), dtype=complex)
        ks = np.array([k for k, _ in self.terms], dtype=int)
        is_complex = False
        # rays per call so that one call sees about ``batch`` stencil rays
        step = max(1, batch // max(U, 1))
        for lo in range(0, N, step):
            sl = slice(lo, min(lo + step, N))
            Xp, XIp = self.perturbed(X[sl], XI[sl])
            nc = Xp.shape[0]
            vals = as_batch(func)(Xp.reshape(-1, self.n), XIp.reshape(-1, self.n))
            is_complex = is_complex or np.iscomplexobj(vals)
            vals = vals.reshape(vals.shape[0], nc, U)
            if vals.shape[0] <= ks.max(initial=0):
                raise ValueError("ray function returned fewer moments than the plan needs")
            # term t uses moment k_t: (T, nc, U) . (T, U) -> (T, nc)
            out[:, sl] = np.einsum("tnu,tu->tn", vals[ks], self.weights)
        out *= self.scales(XI)
        return out if is_complex else out.real


def as_batch(func):
    """Wrap a ray function so it always returns shape (K+1, N)."""

    def wrapped(X, XI):
        vals = np.asarray(func(X, XI))
        return vals[None, :] if vals.ndim == 1 else vals

    return wrapped


def derivative(func, spec, X, XI, stencil=FDStencil(), k=0):
    """One mixed derivative of moment ``k`` of a ray function at rays (X, XI)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    plan = DerivativePlan([(k, spec)], X.shape[1], stencil)
    return plan.evaluate(func, X, XI)[0]
