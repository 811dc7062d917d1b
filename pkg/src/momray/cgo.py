"""Transport amplitudes, moment reduction and the rank-by-rank recovery demonstration.

In cylindrical coordinates x = (x_1, x_0' + r theta) with z = x_1 + i r the
transport operator is T = 4 (d/dzbar - (n-2) / (2 (z - zbar))). Products
(z - zbar)^{(2k-n)/2} h(z) with h holomorphic are lowered by T,

    T[(z - zbar)^{(2k-n)/2} h] = -4 (k-1) (z - zbar)^{(2k-2-n)/2} h,

so T^m annihilates every sum over k = 1..m. Pairing a perturbation field
with such amplitudes turns integral identities into weighted r-moments of
its x_1-Fourier transform against the null vector e_1 + i e_r, which is
what :func:`moment_reduction` evaluates by two independent routes.

:func:`iterative_recovery` runs the recovery ladder on sphere-bundle
moment data of a :class:`PerturbationSet`: it splits the data by parity
into the lifted even and odd sums, reconstructs them on the slice
{x_1 = 0}, and peels off one factor of i_delta per step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import symtensor as st
from .fields import BlobField, GridSpec, TensorBundle, _cubic_interp
from .finite_diff import FDStencil
from .inversion import RecoveryReport, _rel_error, invert_scalar_xray, recover_components
from .raytransform import QuadratureSpec, bundle_moments, parallel_beam
from .spherekernel import SliceField, build_G, construct_v_matrix, moment_conditions, null_vector

__all__ = [
    "ComplexSliceGrid",
    "Holomorphic",
    "Amplitude",
    "holomorphic_library",
    "apply_T",
    "build_a0",
    "transport_residual",
    "PerturbationSet",
    "fourier_x1",
    "moment_reduction",
    "lambda_derivative_check",
    "RecoveryConfig",
    "RecoveryAborted",
    "iterative_recovery",
]

MAX_MONOMIAL = 6


# --------------------------------------------------------------------------
# the complex slice and the transport operator


@dataclass(frozen=True)
class ComplexSliceGrid:
    """Uniform nodes z = x_1 + i r on [x1_lo, x1_hi] x [r_lo, r_hi].

    The factor 1/(z - zbar) is singular at r = 0, so the grid must stay at
    least ``min_cells`` cells away from it.
    """

    x1_range: tuple = (-0.5, 0.5)
    r_range: tuple = (1.5, 2.5)
    counts: tuple = (71, 71)
    min_cells: int = 2

    def __post_init__(self):
        if min(self.counts) < 7:
            raise ValueError("a slice grid needs at least 7 nodes per axis")
        if self.r_range[0] < self.min_cells * self.spacing[1]:
            raise ValueError(f"the grid must stay {self.min_cells} cells away from r = 0")
        if self.x1_range[1] <= self.x1_range[0] or self.r_range[1] <= self.r_range[0]:
            raise ValueError("grid ranges must be increasing")

    @property
    def spacing(self):
        return ((self.x1_range[1] - self.x1_range[0]) / (self.counts[0] - 1),
                (self.r_range[1] - self.r_range[0]) / (self.counts[1] - 1))

    def axes(self):
        return (np.linspace(*self.x1_range, self.counts[0]), np.linspace(*self.r_range, self.counts[1]))

    def z(self):
        x1, r = self.axes()
        return x1[:, None] + 1j * r[None, :]

    @property
    def mask(self):
        """Nodes with r > 0 (all of them, by construction)."""
        return self.z().imag > 0

    def padded(self, cells):
        """The same spacing extended by ``cells`` ghost nodes on every side."""
        h1, hr = self.spacing
        return ComplexSliceGrid((self.x1_range[0] - cells * h1, self.x1_range[1] + cells * h1),
                                (self.r_range[0] - cells * hr, self.r_range[1] + cells * hr),
                                (self.counts[0] + 2 * cells, self.counts[1] + 2 * cells), self.min_cells)

    def interior(self, margin=2):
        out = np.zeros(self.counts, dtype=bool)
        out[margin:-margin, margin:-margin] = True
        return out


# sixth order: repeated application of T amplifies rounding by 1/h per pass,
# so accuracy has to come from the stencil rather than from refinement
_HALF = 3
_CENTRAL = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0
_EDGES = [np.array(w) / 60.0 for w in ([-147.0, 360.0, -450.0, 400.0, -225.0, 72.0, -10.0],
                                       [-10.0, -77.0, 150.0, -100.0, 50.0, -15.0, 2.0],
                                       [2.0, -24.0, -35.0, 80.0, -30.0, 8.0, -1.0])]


def _diff(a, h, axis):
    """Sixth-order first derivative along ``axis`` with one-sided edge stencils."""
    a = np.moveaxis(a, axis, 0)
    N = a.shape[0]
    w = 2 * _HALF + 1
    out = np.empty_like(a)
    out[_HALF:N - _HALF] = sum(c * a[i:N - w + 1 + i] for i, c in enumerate(_CENTRAL))
    for i, c in enumerate(_EDGES):
        out[i] = np.tensordot(c, a[:w], 1)
        out[N - 1 - i] = -np.tensordot(c, a[::-1][:w], 1)
    return np.moveaxis(out / h, 0, axis)


def apply_T(a, grid, n):
    """T a = 4 (d a/dzbar - (n-2) a / (2 (z - zbar))) on grid samples ``a`` (shape grid.counts)."""
    a = np.asarray(a, dtype=complex)
    if a.shape != tuple(grid.counts):
        raise ValueError(f"samples must have shape {tuple(grid.counts)}")
    h1, hr = grid.spacing
    dzbar = 0.5 * (_diff(a, h1, 0) + 1j * _diff(a, hr, 1))
    z = grid.z()
    return 4.0 * (dzbar - (n - 2) * a / (2.0 * (z - z.conj())))


# --------------------------------------------------------------------------
# holomorphic factors and amplitudes


@dataclass(frozen=True)
class Holomorphic:
    """``coef * z^power`` (kind "monomial") or ``coef * exp(-i lam z)`` (kind "exp")."""

    kind: str = "monomial"
    power: int = 0
    lam: float = 0.0
    coef: complex = 1.0

    def __post_init__(self):
        if self.kind not in ("monomial", "exp"):
            raise ValueError(f"unknown holomorphic factor {self.kind!r}")
        if self.kind == "monomial" and not 0 <= self.power <= MAX_MONOMIAL:
            raise ValueError(f"monomial powers run from 0 to {MAX_MONOMIAL}")

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        if self.kind == "monomial":
            return self.coef * z**self.power
        return self.coef * np.exp(-1j * self.lam * z)

    def to_json(self):
        return {"kind": self.kind, "power": self.power, "lam": self.lam,
                "coef": [complex(self.coef).real, complex(self.coef).imag]}


def holomorphic_library(lams=(-1.0, -0.5, 0.5, 1.0)):
    """Monomials z^0..z^6 and exponentials exp(-i lam z)."""
    return [Holomorphic("monomial", p) for p in range(MAX_MONOMIAL + 1)] + [Holomorphic("exp", lam=lam) for lam in lams]


def _zpow(z, e):
    """(z - zbar)^e with the principal branch; z - zbar = 2 i r."""
    return (2j * np.asarray(z).imag) ** e


@dataclass(frozen=True)
class Amplitude:
    """a_0 = sum_k (z - zbar)^{(2k-n)/2} h_k(z), k = 1..m."""

    n: int
    factors: tuple

    @property
    def m(self):
        return len(self.factors)

    @property
    def exponents(self):
        return tuple((2 * k - self.n) / 2 for k in range(1, self.m + 1))

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape, dtype=complex)
        for e, h in zip(self.exponents, self.factors):
            if h is not None:
                out += _zpow(z, e) * h(z)
        return out

    def to_json(self):
        return {"n": self.n, "terms": [{"exponent": e, "factor": None if h is None else h.to_json()}
                                       for e, h in zip(self.exponents, self.factors)]}


def build_a0(h_list, n, grid=None):
    """The amplitude with holomorphic factors ``h_list`` (None for a zero factor).

    Returns the descriptor and, when ``grid`` is given, its samples.
    """
    if len(h_list) < 1:
        raise ValueError("an amplitude needs at least one factor")
    amp = Amplitude(int(n), tuple(h_list))
    return amp, (None if grid is None else amp(grid.z()))


def transport_residual(amp, grid, power=None, margin=2):
    """max |T^power a_0| on the interior of ``grid`` divided by max |a_0| there.

    The closed form is sampled with 3 * power ghost cells around the grid,
    so the one-sided edge stencils never reach the interior after
    ``power`` applications.
    """
    power = amp.m if power is None else power
    pad = _HALF * power
    big = grid.padded(pad)
    a = amp(big.z())
    inner = np.zeros(big.counts, dtype=bool)
    inner[pad:big.counts[0] - pad, pad:big.counts[1] - pad] = grid.interior(margin)
    scale = float(np.max(np.abs(a[inner])))
    for _ in range(power):
        a = apply_T(a, big, amp.n)
    return float(np.max(np.abs(a[inner]))) / scale


# --------------------------------------------------------------------------
# perturbations and moment reduction


class PerturbationSet:
    """Coefficient differences W^0..W^m with the top one in i_delta form.

    ``parts[k]`` has rank k. With ``strict`` the top part must satisfy
    W^m = i_delta(Wbar) (checked at probe points); out-of-model sets for
    negative tests are built with ``strict=False``.
    """

    def __init__(self, parts, strict=True, tol=1e-10):
        self.bundle = parts if isinstance(parts, TensorBundle) else TensorBundle(list(parts))
        if self.m < 2:
            raise ValueError("a perturbation set needs max rank at least 2")
        if strict and self.isotropy_defect(self.m) > tol:
            raise ValueError("the top perturbation is not of the form i_delta(Wbar)")

    @classmethod
    def from_lower(cls, lower, wbar):
        """W^0..W^{m-1} from ``lower`` (a bundle) and W^m = i_delta(wbar)."""
        return cls(list(lower.parts) + [wbar.i_delta()])

    @property
    def m(self):
        return self.bundle.max_rank

    @property
    def dim(self):
        return self.bundle.dim

    @property
    def parts(self):
        return self.bundle.parts

    def isotropy_defect(self, k, count=64, seed=0):
        """Largest trace-free part of W^k relative to max |W^k| at probe points."""
        if k < 2:
            return 0.0
        rng = np.random.default_rng(seed)
        R = max(self.bundle.support_radius, 1e-12)
        pts = rng.uniform(-R, R, (count, self.dim)) * 0.5
        part = self.parts[k]
        if isinstance(part, BlobField):
            pts = np.vstack([pts, part.centers])
        vals = part.evaluate(pts)
        mult = st.multiplicities(k, self.dim)
        D = st.decompose_matrix(k, self.dim)
        trace_free = vals - vals @ D.T @ st.i_delta_matrix(k - 2, self.dim).T
        size = np.sqrt(np.max(np.sum(mult * np.abs(vals) ** 2, axis=1)))
        if size == 0:
            return 0.0
        return float(np.sqrt(np.max(np.sum(mult * np.abs(trace_free) ** 2, axis=1))) / size)


def fourier_x1(W, lam, points, axis=0):
    """The x_1-Fourier transform int W(x) exp(-i lam x_axis) dx_axis of a Gaussian blob field.

    ``points`` (..., n) give the remaining coordinates (the ``axis``
    coordinate is ignored). Closed form, shape (..., ncomp), complex.
    """
    if not isinstance(W, BlobField) or W.profile != "gaussian":
        raise ValueError("the closed-form transform needs a Gaussian blob field")
    pts = np.asarray(points, dtype=float)
    shape = pts.shape[:-1]
    pts = pts.reshape(-1, W.dim)
    out = np.zeros((pts.shape[0], W.ncomp), dtype=complex)
    if W.nblobs == 0:
        return out.reshape(shape + (W.ncomp,))
    d = pts[:, None, :] - W.centers[None]
    d[..., axis] = 0.0
    w2 = W.widths**2
    prof = np.exp(-0.5 * np.sum(d * d, axis=-1) / w2)
    c1 = W.centers[:, axis]
    g0 = np.sqrt(2 * np.pi) * W.widths * np.exp(-1j * lam * c1 - 0.5 * lam**2 * w2)
    # slope along the transform axis picks up the factor -i lam w^2
    coef = W.amps[None] + np.einsum("nbd,bdc->nbc", d, W.slopes)
    coef = coef + (-1j * lam * w2)[None, :, None] * W.slopes[None, :, axis, :]
    out = np.einsum("nb,nbc->nc", prof * g0[None], coef)
    return out.reshape(shape + (W.ncomp,))


def _default_center(W):
    """A polar center on the first transverse axis, just outside the support."""
    c = np.zeros(W.dim - 1)
    c[0] = 1.25 * W.support_radius + 0.1
    return c


def _radial_window(W, center):
    R = W.support_radius
    d = float(np.linalg.norm(center))
    if d <= R:
        raise ValueError("the polar center must lie outside the support ball")
    return d - R, d + R, R


def _gl(lo, hi, quad):
    x, w = quad.rule()
    h = (hi - lo) / quad.panels
    left = lo + h * np.arange(quad.panels)
    return (left[:, None] + 0.5 * h * (x[None] + 1)).ravel(), np.tile(0.5 * h * w, quad.panels)


def moment_reduction(W, alpha, theta, lam, center=None, quad=QuadratureSpec(48, 8), axis=0):
    """Both sides of the reduction to weighted r-moments for one (alpha, theta, lam).

    Route 1 integrates W . (-i)^k nu^k a_0 conj(b_0) r^{n-2} over the
    (x_1, r) half plane with a_0 = exp(-i lam z) (z - zbar)^{(2-n)/2} and
    conj(b_0) = (z - zbar)^{(2 alpha + 2 - n)/2}, divided by the constant
    (2i)^{alpha + 2 - n}. Route 2 integrates (-i)^k r^alpha e^{lam r}
    What(lam, r, theta) . nu^k over r with the closed-form x_1-transform.
    Returns (route1, route2, route1 - route2).
    """
    k, n = W.rank, W.dim
    theta = np.asarray(theta, dtype=float).reshape(n - 1)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if isinstance(W, BlobField) and W.is_zero():
        return 0j, 0j, 0j
    center = _default_center(W) if center is None else np.asarray(center, dtype=float)
    r_lo, r_hi, R = _radial_window(W, center)
    rr, wr = _gl(r_lo, r_hi, quad)
    nu = null_vector(theta[None], axis)[0]
    cw = (-1j) ** k * st.contraction_weights(k, nu)

    # route 1: plane quadrature with the amplitude pair
    xx, wx = _gl(-R, R, quad)
    X1, RR = np.meshgrid(xx, rr, indexing="ij")
    pts = SliceField.sample_points(n, 0.0, center, rr, theta[None], axis)[0]
    pts = np.broadcast_to(pts, (len(xx),) + pts.shape).copy()
    pts[..., axis] = X1
    z = X1 + 1j * RR
    a0, _ = build_a0([Holomorphic("exp", lam=lam)], n)
    ab = a0(z) * _zpow(z, (2 * alpha + 2 - n) / 2) * RR ** (n - 2)
    vals = W.evaluate(pts) @ cw
    route1 = np.sum(wx[:, None] * wr[None, :] * vals * ab) / (2j) ** (alpha + 2 - n)

    # route 2: transform in x_1, then one radial quadrature
    What = fourier_x1(W, lam, pts[0], axis) @ cw
    route2 = np.sum(wr * rr**alpha * np.exp(lam * rr) * What)
    return complex(route1), complex(route2), complex(route1 - route2)


def lambda_derivative_check(W, alpha, theta, order, center=None, quad=QuadratureSpec(48, 8), h=1e-2, axis=0):
    """Differentiate the Fourier route in lam at 0 and compare with the Leibniz expansion.

    The expansion sums binom(g, j) int r^{alpha+g-j} (d/dlam)^j What(0) . nu dr
    with (d/dlam)^j What(0) = int (-i x_1)^j W dx_1 taken by quadrature. The
    j = g term is the transformed derivative whose null-vector moments
    vanish when the derivative is in i_delta form. Returns (fd, expansion,
    top_term).
    """
    if not 0 <= order <= 2:
        raise ValueError("lam derivatives are checked up to order 2")
    k, n = W.rank, W.dim
    center = _default_center(W) if center is None else np.asarray(center, dtype=float)
    theta = np.asarray(theta, dtype=float).reshape(n - 1)
    offs, wts = {0: ((0,), (1.0,)), 1: ((-2, -1, 1, 2), (1 / 12, -2 / 3, 2 / 3, -1 / 12)),
                 2: ((-2, -1, 0, 1, 2), (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12))}[order]
    fd = sum(w * moment_reduction(W, alpha, theta, o * h, center, quad, axis)[1] for o, w in zip(offs, wts)) / h**order

    r_lo, r_hi, R = _radial_window(W, center)
    rr, wr = _gl(r_lo, r_hi, quad)
    xx, wx = _gl(-R, R, quad)
    nu = null_vector(theta[None], axis)[0]
    cw = (-1j) ** k * st.contraction_weights(k, nu)
    pts = SliceField.sample_points(n, 0.0, center, rr, theta[None], axis)[0]
    pts = np.broadcast_to(pts, (len(xx),) + pts.shape).copy()
    pts[..., axis] = xx[:, None]
    vals = W.evaluate(pts) @ cw  # (x1, r)
    terms = []
    for j in range(order + 1):
        dj = np.sum(wx[:, None] * (-1j * xx[:, None]) ** j * vals, axis=0)
        terms.append(math.comb(order, j) * np.sum(wr * rr ** (alpha + order - j) * dj))
    return complex(fd), complex(sum(terms)), complex(terms[-1])


# --------------------------------------------------------------------------
# recovery ladder


@dataclass
class RecoveryConfig:
    n_angles: int = 180
    grid_count: int = 64
    n_offsets: int | None = None
    stencil: FDStencil = field(default_factory=FDStencil)
    quadrature: QuadratureSpec = field(default_factory=lambda: QuadratureSpec(16))
    structure_tol: float = 0.1
    n_theta: int = 8


class RecoveryAborted(RuntimeError):
    """Raised when a peeling step finds no i_delta structure; carries the report."""

    def __init__(self, step, report):
        super().__init__(f"recovery aborted at step {step}: no i_delta structure within tolerance")
        self.step = step
        self.report = report


def _chain_data(W, parity, rank, quad):
    """Ray function (X, XI) -> I^k G, k = 0..rank, built from sphere-bundle data only.

    The parity split (J(x, theta) +- (-1)^k J(x, -theta)) / 2 isolates the
    lifted sum, and homogeneity extends it off the unit sphere.
    """
    def func(X, XI):
        norm = np.linalg.norm(XI, axis=1)
        TH = XI / norm[:, None]
        plus = bundle_moments(W, X, TH, rank, quad)
        minus = bundle_moments(W, X, -TH, rank, quad)
        out = np.empty_like(plus)
        for k in range(rank + 1):
            sign = (-1) ** k if parity == 0 else -((-1) ** k)
            out[k] = 0.5 * (plus[k] + sign * minus[k]) * norm ** (rank - k - 1)
        return out

    return func


def _norms(vals, rank, n):
    return np.sqrt(np.sum(st.multiplicities(rank, n) * np.abs(vals) ** 2, axis=-1))


def iterative_recovery(pset, config=None):
    """Peel the i_delta structure of a perturbation set from its sphere-bundle moments.

    Only J^{m,k}W at unit directions enters. The lifted even and odd sums
    are reconstructed on the slice {x_1 = 0}; each step then removes one
    factor of i_delta from one chain, starting with the chain that holds
    rank m-1. Returns (recovered, report) where ``recovered`` maps the
    terminal rank (0 and/or 1) to nodal values on the slice. Raises
    :class:`RecoveryAborted` when a step finds a trace-free part above
    ``config.structure_tol`` (relative L2 over the slice).
    """
    config = config or RecoveryConfig()
    W = pset.bundle
    m, n = pset.m, pset.dim
    if n != 3:
        raise ValueError("the recovery ladder runs in dimension 3")
    if m > 3:
        raise ValueError("the recovery ladder supports max rank 3")
    R = W.support_radius or 1.0  # an all-zero set still gets a nominal slice disk
    report = RecoveryReport(kind="iterative_recovery", predicted_steps=m // 2 + (m - 1) // 2)

    grid2 = GridSpec.covering(2, R, config.grid_count)
    nodes2 = grid2.nodes().reshape(-1, 2)
    inside = np.linalg.norm(nodes2, axis=1) <= R
    pts3 = np.column_stack([np.zeros(inside.sum()), nodes2[inside]])
    S = config.n_offsets or 2 * int(math.ceil(2 * R / grid2.spacing[0])) + 1
    rays, phis, offsets = parallel_beam(config.n_angles, S, R, dim=3, slice_axes=(1, 2))

    G_true = build_G(W)
    chains = []
    for parity, G in ((0, G_true[0]), (1, G_true[1])):
        if G is not None:
            chains.append((parity, G.rank, G))
    # peel the chain holding rank m-1 first
    chains.sort(key=lambda c: c[1])

    recon = {}
    for parity, rank, G in chains:
        func = _chain_data(W, parity, rank, config.quadrature)
        values, spread, _ = recover_components(func, rank, rays, config.stencil, ranks=[rank])
        comps = st.canonical_indices(rank, n)
        est = np.zeros((len(pts3), len(comps)))
        for c, idx in enumerate(comps):
            sino = values[(rank, idx)].reshape(config.n_angles, S)
            est[:, c] = invert_scalar_xray(sino, phis, offsets, nodes2[inside])
        recon[parity] = est
        tv = G.evaluate(pts3)
        report.rank_errors[f"G{parity + 1}"] = _rel_error(est, tv, st.multiplicities(rank, n))
        report.notes.append(f"chain {parity + 1} (rank {rank}) reconstructed from "
                            f"{config.n_angles} angles x {S} offsets")

    recovered = {}
    step = 0
    for parity, rank, G in chains:
        est = recon[parity]
        truth = G.evaluate(pts3)
        r = rank
        while r >= 2:
            step += 1
            D = st.decompose_matrix(r, n)
            v = est @ D.T
            trace_free = est - v @ st.i_delta_matrix(r - 2, n).T
            resid = float(np.linalg.norm(_norms(trace_free, r, n)) / max(np.linalg.norm(_norms(est, r, n)), 1e-300))
            v_cv = est @ construct_v_matrix(r, n).T
            cv_gap = float(np.linalg.norm(_norms(v_cv - v, r - 2, n)) / max(np.linalg.norm(_norms(v, r - 2, n)), 1e-300))
            mc = _moment_diagnostic(est, r, grid2, R, config.n_theta)
            top = W.parts[r] if r == rank else None
            mred = _reduction_diagnostic(top, m) if top is not None else None
            report.steps.append({
                "step": step, "chain": parity + 1, "rank": r, "structure_residual": resid,
                "construct_v_gap": cv_gap, "moment_condition_residual": mc,
                "moment_reduction_residual": mred, "tolerance": config.structure_tol,
            })
            if resid > config.structure_tol:
                report.status = "aborted"
                report.abort_step = step
                raise RecoveryAborted(step, report)
            est = v
            truth = truth @ D.T
            r -= 2
        recovered[r] = est
        key = "scalar" if r == 0 else "vector"
        report.rank_errors[key] = _rel_error(est, truth, st.multiplicities(r, n))
        report.component_errors.update({
            f"{key}:{','.join(map(str, idx))}": _rel_error(est[:, c], truth[:, c])
            for c, idx in enumerate(st.canonical_indices(r, n))
        })
    report.notes.append(f"{step} peeling steps, {report.predicted_steps} predicted")
    if step != report.predicted_steps:
        report.status = "step_mismatch"
    return {"grid": grid2, "inside": inside, "values": recovered}, report


def _moment_diagnostic(est, rank, grid2, R, n_theta):
    """Null-vector moments of the reconstructed chain on the slice, relative to the moments of |G|."""
    inside = np.linalg.norm(grid2.nodes().reshape(-1, 2), axis=1) <= R
    full = np.zeros((inside.size, est.shape[1]))
    full[inside] = est
    values = full.reshape(grid2.counts + (-1,))

    def func(pts):
        p = pts[..., 1:].reshape(-1, 2)
        out = _cubic_interp(values, grid2, p)
        out[np.linalg.norm(p, axis=1) > R] = 0.0
        return out.reshape(pts.shape[:-1] + (est.shape[1],))

    # lines from a center outside the disk, fanned across it
    center = np.array([1.25 * R + 0.1, 0.0])
    ang = np.pi * (0.9 + 0.2 * np.arange(n_theta) / max(n_theta - 1, 1))
    thetas = np.column_stack([np.cos(ang), np.sin(ang)])
    sl = SliceField.from_function(rank, 3, func, 0.0, center, thetas, support_radius=R)
    mc = np.abs(moment_conditions(sl))
    size = np.abs(sl.values) @ st.multiplicities(rank, 3)
    alphas = np.arange(rank + 1)
    scale = (sl.radii[None, :] ** alphas[:, None] * sl.weights[None, :]) @ size.T
    return float(np.max(mc) / max(np.max(scale), 1e-300))


def _reduction_diagnostic(top, m):
    """Largest |route 1| of the reduction for the chain top at lam = 0 over alpha and a few theta."""
    if not isinstance(top, BlobField) or top.profile != "gaussian" or top.is_zero():
        return None
    worst = 0.0
    for a in np.pi * np.array([0.8, 1.0, 1.2]):
        theta = np.array([np.cos(a), np.sin(a)])
        for alpha in range(m):
            worst = max(worst, abs(moment_reduction(top, alpha, theta, 0.0, quad=QuadratureSpec(24, 8))[0]))
    return worst
