"""Numerical checks of the differential identities obeyed by moment transforms.

Every check compares a left side computed by quadrature with a right side
built from finite differences of freshly evaluated transforms (no cached
tables), and returns pointwise residuals. :func:`verify_identity` wraps a
check into the JSON-ready report used by the ``verify`` command.
"""
from __future__ import annotations

import math

import numpy as np

from . import symtensor as st
from .fields import TensorBundle
from .finite_diff import DerivativePlan, FDStencil, as_batch
from .raytransform import DEFAULT_QUADRATURE, Ray, RaySet, bundle_moments

__all__ = [
    "moment_function",
    "apply_P",
    "P_operator",
    "euler_factor",
    "check_homogeneity",
    "check_index_descent",
    "check_transport_power",
    "check_euler",
    "check_P_composition",
    "verify_identity",
    "IDENTITIES",
]

MAX_P = 4


def _bundle(F):
    return F if isinstance(F, TensorBundle) else TensorBundle.single(F)


def _rays(ray):
    """(X, XI, single) from a Ray, a RaySet or an (X, XI) pair."""
    if isinstance(ray, Ray):
        return np.array([ray.x]), np.array([ray.xi]), True
    if isinstance(ray, RaySet):
        return ray.X, ray.XI, False
    X, XI = ray
    return np.atleast_2d(np.asarray(X, float)), np.atleast_2d(np.asarray(XI, float)), False


def _out(values, single):
    return values[0] if single else values


def moment_function(F, K, quad=DEFAULT_QUADRATURE):
    """Batch ray function (X, XI) -> I^{m,k}F for k = 0..K, shape (K+1, N)."""
    F = _bundle(F)
    return lambda X, XI: bundle_moments(F, X, XI, K, quad)


def _P_plan(p, n, stencil, method, k=0):
    if method == "radial":
        return DerivativePlan([(k, {"lam": p})], n, stencil), None
    if method == "tensor":
        idx = st.canonical_indices(p, n)
        terms = [(k, [("xi", a) for a in I]) for I in idx]
        return DerivativePlan(terms, n, stencil), idx
    raise ValueError(f"unknown method {method!r}")


def _apply_P_batch(func, p, X, XI, stencil, method):
    n = X.shape[1]
    func = as_batch(func)
    if p == 0:
        return func(X, XI)
    K = func(X[:1], XI[:1]).shape[0] - 1
    out = []
    for k in range(K + 1):
        plan, idx = _P_plan(p, n, stencil, method, k)
        vals = plan.evaluate(func, X, XI)
        if idx is not None:
            weights = st.contraction_weights(p, XI)
            vals = np.sum(weights.T * vals, axis=0)
        else:
            vals = vals[0]
        out.append(vals)
    return np.array(out)


def apply_P(evaluator, p, ray, stencil=FDStencil(), method="radial"):
    """Apply xi^{i_1}..xi^{i_p} d^p / dxi^{i_1}..dxi^{i_p} (summed) to a ray function.

    ``method="radial"`` uses d^p/dlam^p of xi -> lam * xi at lam = 1, which
    equals the operator exactly; ``method="tensor"`` sums the mixed partials
    over all index tuples and serves as a cross-check.
    """
    if p < 0:
        raise ValueError("order must be non-negative")
    if p > MAX_P:
        raise ValueError(f"order {p} exceeds {MAX_P}; finite differences would be dominated by noise")
    X, XI, single = _rays(ray)
    vals = _apply_P_batch(evaluator, p, X, XI, stencil, method)
    if vals.shape[0] == 1:
        vals = vals[0]
    return _out(vals, single)


def P_operator(evaluator, p, stencil=FDStencil(), method="radial"):
    """The ray function P_p(evaluator), for composing operators."""
    if p > MAX_P:
        raise ValueError(f"order {p} exceeds {MAX_P}")
    return lambda X, XI: _apply_P_batch(evaluator, p, X, XI, stencil, method)


def euler_factor(l, k, m):
    """prod_{j=1..m} (l - k - j): the eigenvalue of P_m on I^k of a rank-l field."""
    return math.prod(l - k - j for j in range(1, m + 1))


def homogeneity_terms(f, k, ray, lambdas=(0.5, 2.0, 3.0), q=DEFAULT_QUADRATURE):
    """(lhs, rhs) stacked over lambda: I^k f(x, lam xi) and lam^(l-k-1) I^k f(x, xi)."""
    if any(lam <= 0 for lam in lambdas):
        raise ValueError("scaling factors must be positive")
    X, XI, _ = _rays(ray)
    F = _bundle(f)
    base = bundle_moments(F, X, XI, k, q)[k]
    lhs = np.array([bundle_moments(F, X, lam * XI, k, q)[k] for lam in lambdas])
    rhs = np.array([lam ** (f.rank - k - 1) * base for lam in lambdas])
    return lhs, rhs


def check_homogeneity(f, k, ray, lambdas=(0.5, 2.0, 3.0), q=DEFAULT_QUADRATURE):
    """Max over lambda of the relative deviation of I^k f(x, lam xi) from lam^(l-k-1) I^k f(x, xi)."""
    _, _, single = _rays(ray)
    lhs, rhs = homogeneity_terms(f, k, ray, tuple(lam for lam in lambdas if lam != 1.0) or (1.0,), q)
    dev = np.abs(lhs - rhs)
    mag = np.abs(rhs)
    rel = np.where(mag > 0, dev / np.where(mag > 0, mag, 1.0), dev)
    if all(lam == 1.0 for lam in lambdas):
        rel = np.zeros_like(rel)
    return _out(rel.max(axis=0), single)


def index_descent_terms(F, k, axis, ray, stencil=FDStencil(), q=DEFAULT_QUADRATURE):
    """(lhs, rhs): I^{m-1,k}((F)_axis) by quadrature and d_xi I^{m,k}F - d_x I^{m,k+1}F by differences."""
    F = _bundle(F)
    m = F.max_rank
    if not 0 <= k <= m - 1:
        raise ValueError(f"moment order must satisfy 0 <= k <= m-1 = {m - 1}")
    X, XI, single = _rays(ray)
    lhs = bundle_moments(F.index_descent(axis), X, XI, k, q)[k]
    plan = DerivativePlan([(k, {("xi", axis): 1}), (k + 1, {("x", axis): 1})], X.shape[1], stencil)
    d = plan.evaluate(moment_function(F, k + 1, q), X, XI)
    return _out(lhs, single), _out(d[0] - d[1], single)


def check_index_descent(F, k, axis, ray, stencil=FDStencil(), q=DEFAULT_QUADRATURE):
    lhs, rhs = index_descent_terms(F, k, axis, ray, stencil, q)
    return np.abs(lhs - rhs)


def transport_terms(F, k, p, ray, stencil=FDStencil(), q=DEFAULT_QUADRATURE):
    """(lhs, rhs): <xi, d_x>^p I^{m,k}F by differences along the ray and the closed form."""
    if p < 1:
        raise ValueError("power must be at least 1")
    F = _bundle(F)
    X, XI, single = _rays(ray)
    lhs = DerivativePlan([(k, {"s": p})], X.shape[1], stencil).evaluate(moment_function(F, k, q), X, XI)[0]
    if p <= k:
        coef = (-1) ** p * math.comb(k, p) * math.factorial(p)
        rhs = coef * bundle_moments(F, X, XI, k - p, q)[k - p]
    else:
        rhs = np.zeros_like(lhs)
    return _out(lhs, single), _out(rhs, single)


def check_transport_power(F, k, p, ray, stencil=FDStencil(), q=DEFAULT_QUADRATURE):
    lhs, rhs = transport_terms(F, k, p, ray, stencil, q)
    return np.abs(lhs - rhs)


def euler_terms(f, k, m, ray, stencil=FDStencil(), q=DEFAULT_QUADRATURE, method="radial"):
    if m > 3:
        raise ValueError("Euler check supports operator order up to 3")
    X, XI, single = _rays(ray)
    func = lambda A, B: bundle_moments(_bundle(f), A, B, k, q)[k]  # noqa: E731
    lhs = _apply_P_batch(func, m, X, XI, stencil, method)[0]
    rhs = euler_factor(f.rank, k, m) * bundle_moments(_bundle(f), X, XI, k, q)[k]
    return _out(lhs, single), _out(rhs, single)


def check_euler(f, k, m, ray, stencil=FDStencil(), q=DEFAULT_QUADRATURE, method="radial"):
    """|P_m I^k f - prod_j (l-k-j) I^k f| for a single-rank field f of rank l."""
    lhs, rhs = euler_terms(f, k, m, ray, stencil, q, method)
    return np.abs(lhs - rhs)


def composition_terms(evaluator, m, ray, stencil=FDStencil(), method="radial"):
    """(lhs, rhs): P_1 P_m g against P_{m+1} g + m P_m g."""
    X, XI, single = _rays(ray)
    inner = P_operator(evaluator, m, stencil, method)
    lhs = _apply_P_batch(inner, 1, X, XI, stencil, method)
    rhs = _apply_P_batch(evaluator, m + 1, X, XI, stencil, method) + m * _apply_P_batch(
        evaluator, m, X, XI, stencil, method)
    lhs, rhs = lhs[0], rhs[0]
    return _out(lhs, single), _out(rhs, single)


def check_P_composition(evaluator, m, ray, stencil=FDStencil(), method="radial"):
    lhs, rhs = composition_terms(evaluator, m, ray, stencil, method)
    return np.abs(lhs - rhs)


# --------------------------------------------------------------------------
# reports

IDENTITIES = ("homogeneity", "index_descent", "transport", "euler", "composition")


def _scale(*arrays):
    return max(max((float(np.max(np.abs(a))) for a in arrays), default=0.0), 1e-8)


def verify_identity(name, F, rays, params, stencil=FDStencil(), q=DEFAULT_QUADRATURE, tolerance=1e-3):
    """Evaluate one identity over ``rays`` and return the report dictionary.

    ``residual`` is the largest pointwise residual divided by the value
    scale max(|I^{m,k}F| over the probe rays, 1e-8).
    """
    F = _bundle(F)
    k = int(params.get("k", 0))
    X, XI = rays.X, rays.XI
    base = bundle_moments(F, X, XI, max(k, 0), q)[k]
    if name == "homogeneity":
        lams = tuple(params.get("lambdas", (0.5, 2.0, 3.0)))
        worst = 0.0
        for part in F.parts:
            lhs, rhs = homogeneity_terms(part, k, rays, lams, q)
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / _scale(rhs))
        residual = worst
    elif name == "index_descent":
        lhs, rhs = index_descent_terms(F, k, int(params.get("axis", 0)), rays, stencil, q)
        residual = float(np.max(np.abs(lhs - rhs))) / _scale(lhs, base)
    elif name == "transport":
        lhs, rhs = transport_terms(F, k, int(params["p"]), rays, stencil, q)
        residual = float(np.max(np.abs(lhs - rhs))) / _scale(base, rhs)
    elif name == "euler":
        order = int(params.get("order", 1))
        worst = 0.0
        for part in F.parts:
            lhs, rhs = euler_terms(part, k, order, rays, stencil, q)
            ref = bundle_moments(TensorBundle.single(part), X, XI, k, q)[k]
            worst = max(worst, float(np.max(np.abs(lhs - rhs))) / _scale(ref))
        residual = worst
    elif name == "composition":
        order = int(params.get("order", 1))
        g = lambda A, B: bundle_moments(F, A, B, k, q)[k]  # noqa: E731
        lhs, rhs = composition_terms(g, order, rays, stencil)
        residual = float(np.max(np.abs(lhs - rhs))) / _scale(lhs, rhs, base)
    else:
        raise ValueError(f"unknown identity {name!r}; choose from {IDENTITIES}")
    return {
        "identity": name,
        "params": {key: (list(v) if isinstance(v, tuple) else v) for key, v in params.items()},
        "residual": residual,
        "tolerance": tolerance,
        "pass": bool(residual <= tolerance),
    }
