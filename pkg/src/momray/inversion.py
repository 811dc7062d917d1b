"""Recovery of every component's scalar X-ray data from the moment family.

For a bundle F of max rank m, the scalar X-ray transform of component
(i_1..i_j) of the rank-j part is

    c_{m,j} * sym_{i_1..i_j} P_{m-j} sum_{k=0}^{j} (-1)^k C(j,k)
        d^j I^{m,k}F / dx^{i_1}..dx^{i_k} dxi^{i_{k+1}}..dxi^{i_j}

with c_{m,j} = (-1)^(m-j) / ((m-j)! j!), ``sym`` the average over index
permutations and P_q the radial Euler-type operator. Only moments
k = 0..j enter rank j, so withholding high moments leaves low ranks intact.

Scalar X-ray data on a parallel-beam scan is then inverted by filtered
backprojection, which gives an end-to-end field reconstruction.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import backend
from . import symtensor as st
from .fields import GridSpec, SymTensorField, TensorBundle
from .finite_diff import DerivativePlan, FDStencil
from .raytransform import QuadratureSpec, RaySet, bundle_moments, parallel_beam

__all__ = [
    "ComponentXrayData",
    "RecoveryReport",
    "PipelineConfig",
    "MomentTable",
    "recover_scalar_moment",
    "recover_component",
    "recover_components",
    "component_terms",
    "invert_scalar_xray",
    "full_inverse_pipeline",
    "MIN_ANGLES",
]

MAX_RANK = 3
MIN_ANGLES = 60


@dataclass
class ComponentXrayData:
    rank: int
    index: tuple
    rays: RaySet
    values: np.ndarray


@dataclass
class RecoveryReport:
    """Diagnostics of a recovery run; ``to_json`` gives the published report shape."""

    kind: str
    status: str = "ok"
    steps: list = field(default_factory=list)
    rank_errors: dict = field(default_factory=dict)
    component_errors: dict = field(default_factory=dict)
    undetermined_ranks: list = field(default_factory=list)
    symmetry_spread: dict = field(default_factory=dict)
    abort_step: int | None = None
    predicted_steps: int | None = None
    notes: list = field(default_factory=list)

    def to_json(self):
        return json.loads(json.dumps(asdict(self), default=_jsonable))


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, complex):
        return [v.real, v.imag]
    raise TypeError(f"cannot serialize {type(v)}")


def _check_rank(m):
    if m > MAX_RANK:
        raise ValueError(f"max rank {m} exceeds {MAX_RANK}: deeper finite differences drown in rounding noise")


# --------------------------------------------------------------------------
# component formula


def _spec(x_axes, xi_axes, lam):
    spec = {}
    for a in x_axes:
        spec[("x", a)] = spec.get(("x", a), 0) + 1
    for a in xi_axes:
        spec[("xi", a)] = spec.get(("xi", a), 0) + 1
    if lam:
        spec["lam"] = lam
    return tuple(sorted(spec.items(), key=lambda kv: repr(kv[0])))


def component_terms(m, index, by_permutation=False):
    """Derivative terms of the component formula as {(k, spec): coefficient}.

    With ``by_permutation`` a list with one term dictionary per index
    permutation is returned (before averaging), for the symmetry diagnostic.
    """
    j = len(index)
    if j > m:
        raise ValueError(f"component rank {j} exceeds max rank {m}")
    pref = (-1) ** (m - j) / (math.factorial(m - j) * math.factorial(j))
    perms = list(itertools.permutations(index))
    per_perm = []
    for perm in perms:
        terms = {}
        for k in range(j + 1):
            key = (k, _spec(perm[:k], perm[k:], m - j))
            terms[key] = terms.get(key, 0.0) + pref * (-1) ** k * math.comb(j, k)
        per_perm.append(terms)
    if by_permutation:
        return per_perm
    total = {}
    for terms in per_perm:
        for key, c in terms.items():
            total[key] = total.get(key, 0.0) + c / len(perms)
    return total


class _ComponentPlan:
    """One derivative plan covering many components, with a combination matrix."""

    def __init__(self, m, components, n, stencil, with_spread=False):
        self.components = list(components)
        keys = {}
        rows = []
        perm_rows = []
        for idx in self.components:
            terms = component_terms(m, idx)
            rows.append({keys.setdefault(key, len(keys)): c for key, c in terms.items()})
            if with_spread:
                pr = []
                for terms_p in component_terms(m, idx, by_permutation=True):
                    pr.append({keys.setdefault(key, len(keys)): c for key, c in terms_p.items()})
                perm_rows.append(pr)
        self.keys = list(keys)
        self.plan = DerivativePlan([(k, dict(spec)) for k, spec in self.keys], n, stencil)
        self.matrix = np.zeros((len(rows), len(keys)))
        for r, row in enumerate(rows):
            for t, c in row.items():
                self.matrix[r, t] = c
        self.perm_matrices = []
        for pr in perm_rows:
            mat = np.zeros((len(pr), len(keys)))
            for r, row in enumerate(pr):
                for t, c in row.items():
                    mat[r, t] = c
            self.perm_matrices.append(mat)

    def evaluate(self, func, X, XI):
        d = self.plan.evaluate(func, X, XI)
        values = self.matrix @ d
        spread = [np.max(np.ptp(mat @ d, axis=0)) if mat.shape[0] > 1 else 0.0 for mat in self.perm_matrices]
        return values, spread


def _rays(ray):
    if isinstance(ray, RaySet):
        return ray.X, ray.XI, False
    return np.array([ray.x]), np.array([ray.xi]), True


def recover_scalar_moment(M, m, ray, stencil=FDStencil()):
    """I^0 f^(0) = ((-1)^m / m!) P_m I^{m,0}F, with ``M`` a ray function for I^{m,0}F."""
    _check_rank(m)
    return recover_component(M, m, 0, (), ray, stencil)


def recover_component(Mk, m, j, indices, ray, stencil=FDStencil()):
    """Scalar X-ray transform of component ``indices`` (0-based axes) of the rank-j part.

    ``Mk`` maps rays (X, XI) to moments I^{m,k}F for k = 0..K with K >= j.
    """
    _check_rank(m)
    indices = tuple(int(a) for a in indices)
    if len(indices) != j:
        raise ValueError(f"rank {j} component needs {j} indices, got {len(indices)}")
    if not 0 <= j <= m:
        raise ValueError("component rank must lie in 0..m")
    X, XI, single = _rays(ray)
    if any(not 0 <= a < X.shape[1] for a in indices):
        raise ValueError("component index out of range")
    cp = _ComponentPlan(m, [indices], X.shape[1], stencil)
    values, _ = cp.evaluate(Mk, X, XI)
    return values[0, 0] if single else values[0]


def recover_components(Mk, m, rays, stencil=FDStencil(), K=None, ranks=None, with_spread=True):
    """Every canonical component of every determined rank at all rays.

    Returns (values, spread, undetermined): ``values[(j, idx)]`` is an
    array over rays, ``spread[(j, idx)]`` the largest disagreement between
    index orderings before averaging, and ``undetermined`` the ranks that
    need moments beyond ``K``.
    """
    _check_rank(m)
    K = m if K is None else K
    n = rays.dim
    ranks = list(range(m + 1)) if ranks is None else list(ranks)
    determined = [j for j in ranks if j <= K]
    undetermined = [j for j in ranks if j > K]
    comps = [idx for j in determined for idx in st.canonical_indices(j, n)]
    if not comps:
        return {}, {}, undetermined
    cp = _ComponentPlan(m, comps, n, stencil, with_spread)
    vals, spread = cp.evaluate(Mk, rays.X, rays.XI)
    values = {(len(idx), idx): vals[i] for i, idx in enumerate(comps)}
    spreads = {(len(idx), idx): float(spread[i]) for i, idx in enumerate(comps)} if with_spread else {}
    return values, spreads, undetermined


# --------------------------------------------------------------------------
# filtered backprojection


def _ramlak(S, ds):
    """FFT of the zero-padded, apodized spatial Ram-Lak kernel."""
    L = 1 << int(math.ceil(math.log2(2 * S)))
    n = np.arange(L)
    n = np.where(n <= L // 2, n, n - L)
    h = np.zeros(L)
    h[n == 0] = 1.0 / (4 * ds * ds)
    odd = n % 2 == 1
    h[odd] = -1.0 / (np.pi**2 * n[odd] ** 2 * ds * ds)
    H = np.fft.fft(h).real
    omega = 2 * np.pi * np.fft.fftfreq(L, d=ds)
    return H * np.cos(omega * ds / 2), L


def invert_scalar_xray(sinogram, phis, offsets, points, kernels=None):
    """Filtered backprojection of parallel-beam line integrals.

    ``sinogram[a, i]`` is the integral along direction (cos phi_a, sin phi_a)
    through the base point offsets[i] * (-sin phi_a, cos phi_a), phi in
    [0, pi). Returns reconstructed values at ``points`` (shape (M, 2)).
    """
    sinogram = np.asarray(sinogram, dtype=float)
    A, S = sinogram.shape
    if A < MIN_ANGLES:
        raise ValueError(f"filtered backprojection needs at least {MIN_ANGLES} angles, got {A}")
    offsets = np.asarray(offsets, dtype=float)
    ds = offsets[1] - offsets[0]
    if not np.allclose(np.diff(offsets), ds):
        raise ValueError("detector offsets must be uniformly spaced")
    H, L = _ramlak(S, ds)
    padded = np.zeros((A, L))
    padded[:, :S] = sinogram
    q = ds * np.fft.ifft(np.fft.fft(padded, axis=1) * H[None, :], axis=1).real[:, :S]
    kern = kernels or backend.kernels
    pts = np.ascontiguousarray(np.atleast_2d(points), dtype=float)
    bp = kern.backproject(np.ascontiguousarray(q), np.cos(phis), np.sin(phis), float(offsets[0]), float(ds), pts)
    return np.pi / A * bp


# --------------------------------------------------------------------------
# moment table fast path


class MomentTable:
    """Moments of a planar bundle tabulated on a (phi, s, rho) ray grid.

    Ray (phi, s, rho) has direction rho * (cos phi, sin phi) and base point
    s * (-sin phi, cos phi). A general ray is reduced to this form by sliding
    its base point along the line, using
    I^k(x + a xi, xi) = sum_i C(k, i) (-a)^(k-i) I^i(x, xi),
    and the table is read with periodic cubic interpolation in phi and cubic
    interpolation in s and rho. Faster than fresh quadrature but less
    accurate; not used for acceptance.
    """

    def __init__(self, phis, offsets, rhos, values):
        self.phis = np.asarray(phis, dtype=float)
        self.offsets = np.asarray(offsets, dtype=float)
        self.rhos = np.asarray(rhos, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[1:] != (self.phis.size, self.offsets.size, self.rhos.size):
            raise ValueError("table values must have shape (K+1, n_phi, n_s, n_rho)")
        if min(self.offsets.size, self.rhos.size) < 4 or self.phis.size < 8:
            raise ValueError("table axes are too short for cubic interpolation")

    @property
    def K(self):
        return self.values.shape[0] - 1

    @staticmethod
    def grid_rays(n_phi, n_s, rhos, radius):
        phis = 2 * np.pi * np.arange(n_phi) / n_phi
        offsets = np.linspace(-radius, radius, n_s)
        P, S, R = np.meshgrid(phis, offsets, np.asarray(rhos, float), indexing="ij")
        X = np.stack([-S * np.sin(P), S * np.cos(P)], axis=-1).reshape(-1, 2)
        XI = np.stack([R * np.cos(P), R * np.sin(P)], axis=-1).reshape(-1, 2)
        return RaySet(X, XI), phis, offsets

    @classmethod
    def from_bundle(cls, F, n_phi, n_s, rhos, K, quad=QuadratureSpec()):
        if F.dim != 2:
            raise ValueError("moment tables are planar")
        rays, phis, offsets = cls.grid_rays(n_phi, n_s, rhos, F.support_radius)
        vals = bundle_moments(F, rays.X, rays.XI, K, quad)
        return cls(phis, offsets, rhos, vals.reshape(K + 1, n_phi, n_s, len(rhos)))

    @classmethod
    def from_samples(cls, samples):
        """Rebuild the table from moment samples taken on a ``grid_rays`` grid."""
        X, XI = samples.rays.X, samples.rays.XI
        if X.shape[1] != 2:
            raise ValueError("moment tables are planar")
        rho = np.linalg.norm(XI, axis=1)
        phi = np.mod(np.arctan2(XI[:, 1], XI[:, 0]), 2 * np.pi)
        s = -X[:, 0] * np.sin(phi) + X[:, 1] * np.cos(phi)
        phis = np.unique(np.round(phi, 10))
        offs = np.unique(np.round(s, 10))
        rhos = np.unique(np.round(rho, 10))
        if phis.size * offs.size * rhos.size != X.shape[0]:
            raise ValueError("moment samples do not lie on a (phi, s, rho) table grid")
        ip = np.searchsorted(phis, np.round(phi, 10))
        is_ = np.searchsorted(offs, np.round(s, 10))
        ir = np.searchsorted(rhos, np.round(rho, 10))
        vals = np.zeros((samples.K + 1, phis.size, offs.size, rhos.size))
        vals[:, ip, is_, ir] = samples.values
        return cls(phis, offs, rhos, vals)

    def _interp(self, phi, s, rho):
        def weights(u, n, periodic):
            i0 = np.floor(u).astype(int) - 1
            if not periodic:
                i0 = np.clip(i0, 0, n - 4)
            from .fields import cubic_weights

            w = cubic_weights(u - i0)
            idx = i0[:, None] + np.arange(4)[None, :]
            idx = np.mod(idx, n) if periodic else idx
            return idx, w

        dphi = 2 * np.pi / self.phis.size
        ip, wp = weights(np.mod(phi - self.phis[0], 2 * np.pi) / dphi, self.phis.size, True)
        is_, ws = weights((s - self.offsets[0]) / (self.offsets[1] - self.offsets[0]), self.offsets.size, False)
        ir, wr = weights((rho - self.rhos[0]) / (self.rhos[1] - self.rhos[0]), self.rhos.size, False)
        out = np.zeros((self.K + 1, phi.size))
        for a in range(4):
            for b in range(4):
                for c in range(4):
                    w = wp[:, a] * ws[:, b] * wr[:, c]
                    out += w[None] * self.values[:, ip[:, a], is_[:, b], ir[:, c]]
        inside = (s >= self.offsets[0]) & (s <= self.offsets[-1])
        return np.where(inside[None], out, 0.0)

    def __call__(self, X, XI):
        rho = np.linalg.norm(XI, axis=1)
        phi = np.arctan2(XI[:, 1], XI[:, 0])
        theta = XI / rho[:, None]
        s = -X[:, 0] * theta[:, 1] + X[:, 1] * theta[:, 0]
        a = np.sum(X * XI, axis=1) / rho**2
        base = self._interp(phi, s, rho)
        out = np.zeros_like(base)
        for k in range(self.K + 1):
            for i in range(k + 1):
                out[k] += math.comb(k, i) * (-a) ** (k - i) * base[i]
        return out


# --------------------------------------------------------------------------
# end-to-end pipeline


@dataclass
class PipelineConfig:
    n_angles: int = 180
    grid_count: int = 64
    n_offsets: int | None = None
    moments: int | None = None
    stencil: FDStencil = field(default_factory=FDStencil)
    quadrature: QuadratureSpec = field(default_factory=lambda: QuadratureSpec(panels=16))
    slices: tuple = (0.0,)
    radius: float | None = None


def _rel_error(est, true, weights=None):
    est, true = np.asarray(est), np.asarray(true)
    w = np.ones(true.shape[-1]) if weights is None else weights
    num = np.sqrt(np.sum(w * np.abs(est - true) ** 2))
    den = np.sqrt(np.sum(w * np.abs(true) ** 2))
    return float(num / den) if den > 0 else float(num)


def full_inverse_pipeline(source, config=None, truth=None):
    """Reconstruct every determined rank of a bundle from its moments.

    ``source`` is either a TensorBundle (moments synthesized by quadrature)
    or a ray function returning moments (e.g. a MomentTable), in which case
    ``config.radius`` and the dimension (2) must be known. For n = 3 the
    planes x_3 = z for z in ``config.slices`` are reconstructed separately.

    Returns (estimate, RecoveryReport). The estimate is a bundle of grid
    fields for n = 2 and a dictionary of per-slice nodal values for n = 3.
    """
    config = config or PipelineConfig()
    if isinstance(source, TensorBundle):
        F = source
        truth = F if truth is None else truth
        m, n, R = F.max_rank, F.dim, F.support_radius or 1.0
        K = m if config.moments is None else config.moments
        quad = config.quadrature

        def Mk(X, XI):
            vals = bundle_moments(F, X, XI, m, quad)
            vals[K + 1:] = 0.0
            return vals
    else:
        Mk = source
        if config.radius is None:
            raise ValueError("a moment source without a bundle needs config.radius")
        R = config.radius
        n = 2
        m = getattr(source, "K", None) if truth is None else truth.max_rank
        if m is None:
            raise ValueError("cannot infer the max rank of the moment source")
        K = m if config.moments is None else config.moments
    _check_rank(m)
    if n not in (2, 3):
        raise ValueError("the pipeline reconstructs planes in dimension 2 or 3")
    report = RecoveryReport(kind="full_inverse")
    grid2 = GridSpec.covering(2, R, config.grid_count)
    # two detector samples per grid cell keeps the apodized filter from blurring
    S = config.n_offsets or 2 * int(math.ceil(2 * R / grid2.spacing[0])) + 1
    nodes2 = grid2.nodes().reshape(-1, 2)
    inside = np.linalg.norm(nodes2, axis=1) <= R
    slices = (0.0,) if n == 2 else tuple(config.slices)
    comps_by_rank = {j: st.canonical_indices(j, n) for j in range(m + 1)}
    est_vals = {j: np.zeros((len(slices), nodes2.shape[0], len(comps_by_rank[j]))) for j in range(m + 1)}
    for zi, z in enumerate(slices):
        origin = None if n == 2 else (0.0, 0.0, z)
        rays, phis, offsets = parallel_beam(config.n_angles, S, R, dim=n, origin=origin)
        values, spread, undetermined = recover_components(Mk, m, rays, config.stencil, K=K)
        report.undetermined_ranks = undetermined
        for (j, idx), v in values.items():
            sino = v.reshape(config.n_angles, S)
            rec = invert_scalar_xray(sino, phis, offsets, nodes2[inside])
            est_vals[j][zi, inside, comps_by_rank[j].index(idx)] = rec
            key = f"{j}:{','.join(map(str, idx))}"
            report.symmetry_spread[key] = max(report.symmetry_spread.get(key, 0.0), spread.get((j, idx), 0.0))
    if n == 2:
        parts = [SymTensorField(j, grid2, est_vals[j][0].reshape(grid2.counts + (-1,)), R) for j in range(m + 1)]
        est = TensorBundle(parts)
    else:
        est = {"grid": grid2, "slices": slices, "values": est_vals}
    report.steps.append({"slices": list(slices), "angles": config.n_angles, "offsets": S, "moments_used": K})
    if truth is not None:
        for j in range(m + 1):
            if j in report.undetermined_ranks:
                continue
            part = truth.parts[j] if j <= truth.max_rank else None
            mult = st.multiplicities(j, n)
            errs_true, errs_est = [], []
            for zi, z in enumerate(slices):
                pts = nodes2[inside] if n == 2 else np.column_stack([nodes2[inside], np.full(inside.sum(), z)])
                tv = part.evaluate(pts) if part is not None else np.zeros((pts.shape[0], len(mult)))
                errs_true.append(tv)
                errs_est.append(est_vals[j][zi, inside])
            tv, ev = np.concatenate(errs_true), np.concatenate(errs_est)
            report.rank_errors[str(j)] = _rel_error(ev, tv, mult)
            for c, idx in enumerate(comps_by_rank[j]):
                report.component_errors[f"{j}:{','.join(map(str, idx))}"] = _rel_error(ev[:, c], tv[:, c])
    return est, report
