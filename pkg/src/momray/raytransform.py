"""Momentum ray transforms by composite Gauss-Legendre quadrature.

For a rank-l field f the transform of order k along the line x + t xi is

    I^k f(x, xi) = int t^k f_{i_1..i_l}(x + t xi) xi^{i_1} .. xi^{i_l} dt,

and the bundle transform sums this over all ranks. Directions are not
normalized. Integration runs over the chord cut from the line by the
bundle's support ball, so rays missing the ball give exactly zero.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backend
from . import symtensor as st
from .fields import BlobField, SymTensorField, TensorBundle

__all__ = [
    "Ray",
    "RaySet",
    "QuadratureSpec",
    "MomentSamples",
    "chord",
    "bundle_moments",
    "field_moments",
    "mrt_rank",
    "mrt_bundle",
    "mrt_sphere",
    "sample_moments",
    "adjoint_apply",
    "adjoint_values",
    "AnnulusQuadrature",
    "parallel_beam",
]


@dataclass(frozen=True)
class QuadratureSpec:
    panels: int = 32
    order: int = 8

    def __post_init__(self):
        if self.panels < 4:
            raise ValueError(f"need at least 4 panels per chord, got {self.panels}")
        if self.order < 1:
            raise ValueError("panel order must be positive")

    def rule(self):
        x, w = np.polynomial.legendre.leggauss(self.order)
        return np.ascontiguousarray(x), np.ascontiguousarray(w)


DEFAULT_QUADRATURE = QuadratureSpec()


@dataclass(frozen=True)
class Ray:
    x: tuple
    xi: tuple

    def __post_init__(self):
        x = tuple(float(v) for v in self.x)
        xi = tuple(float(v) for v in self.xi)
        if len(x) != len(xi):
            raise ValueError("base point and direction must have the same dimension")
        if np.linalg.norm(xi) <= 1e-12:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self):
        return len(self.x)


class RaySet:
    """A batch of rays as two (N, n) arrays."""

    def __init__(self, X, XI):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        XI = np.ascontiguousarray(np.atleast_2d(np.asarray(XI, dtype=float)))
        if X.shape != XI.shape:
            raise ValueError("X and XI must have the same shape")
        if X.shape[0] == 0:
            raise ValueError("ray set is empty")
        if np.any(np.linalg.norm(XI, axis=1) <= 1e-12):
            raise ValueError("directions must be nonzero")
        self.X, self.XI = X, XI

    @classmethod
    def from_rays(cls, rays):
        rays = list(rays)
        return cls([r.x for r in rays], [r.xi for r in rays])

    def __len__(self):
        return self.X.shape[0]

    def __getitem__(self, i):
        return Ray(self.X[i], self.XI[i])

    @property
    def dim(self):
        return self.X.shape[1]

    def to_json(self):
        return {"x": self.X.tolist(), "xi": self.XI.tolist()}

    @classmethod
    def from_json(cls, d):
        return cls(d["x"], d["xi"])

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path):
        return cls.from_json(json.loads(Path(path).read_text()))


def parallel_beam(n_angles, n_offsets, radius, dim=2, slice_axes=(0, 1), origin=None):
    """Rays of a parallel-beam scan in a coordinate plane.

    Direction theta = cos(phi) e_a + sin(phi) e_b with phi in [0, pi), base
    point s * theta_perp where theta_perp = -sin(phi) e_a + cos(phi) e_b and
    s runs over ``n_offsets`` points in [-radius, radius]. Returns the ray set
    plus (phis, offsets); rays are ordered angle-major.
    """
    phis = np.pi * np.arange(n_angles) / n_angles
    offsets = np.linspace(-radius, radius, n_offsets)
    a, b = slice_axes
    P, S = np.meshgrid(phis, offsets, indexing="ij")
    X = np.zeros((P.size, dim)) if origin is None else np.tile(np.asarray(origin, float), (P.size, 1))
    XI = np.zeros((P.size, dim))
    X[:, a] += -S.ravel() * np.sin(P.ravel())
    X[:, b] += S.ravel() * np.cos(P.ravel())
    XI[:, a] = np.cos(P.ravel())
    XI[:, b] = np.sin(P.ravel())
    return RaySet(X, XI), phis, offsets


def chord(X, XI, radius):
    """Parameter interval where x + t xi lies in the ball; empty intervals have t1 <= t0."""
    a = np.sum(XI * XI, axis=1)
    b = 2.0 * np.sum(X * XI, axis=1)
    c = np.sum(X * X, axis=1) - radius * radius
    disc = b * b - 4.0 * a * c
    root = np.sqrt(np.clip(disc, 0.0, None))
    t0 = np.where(disc > 0, (-b - root) / (2.0 * a), 0.0)
    t1 = np.where(disc > 0, (-b + root) / (2.0 * a), 0.0)
    return np.ascontiguousarray(t0), np.ascontiguousarray(t1)


def _blob_coefficients(fields, XI):
    """Stack blobs of several analytic fields with per-ray contracted coefficients."""
    centers, widths, A, Bv = [], [], [], []
    for f in fields:
        if f.nblobs == 0:
            continue
        cw = st.contraction_weights(f.rank, XI)
        centers.append(f.centers)
        widths.append(f.widths)
        A.append(cw @ f.amps.T)
        Bv.append(np.einsum("nc,bdc->nbd", cw, f.slopes))
    if not centers:
        return None
    return (np.ascontiguousarray(np.concatenate(centers)), np.ascontiguousarray(np.concatenate(widths)),
            np.concatenate(A, axis=1), np.concatenate(Bv, axis=1))


def _is_complex(f):
    if isinstance(f, BlobField):
        return np.iscomplexobj(f.amps) or np.iscomplexobj(f.slopes)
    return np.iscomplexobj(f.values)


def _real_parts(fields):
    """Split fields into (real parts, imaginary parts) when any is complex."""
    if not any(_is_complex(f) for f in fields):
        return fields, None
    return [_part(f, np.real) for f in fields], [_part(f, np.imag) for f in fields]


def _part(f, op):
    if isinstance(f, BlobField):
        return BlobField(f.rank, f.dim, f.centers, f.widths, op(f.amps), op(f.slopes), f.profile)
    return SymTensorField(f.rank, f.grid, op(f.values), f.support_radius)


def field_moments(fields, X, XI, K, quad=DEFAULT_QUADRATURE, radius=None, kernels=None):
    """Sum over ``fields`` of I^k f at every ray, for k = 0..K. Shape (K+1, N).

    ``radius`` is the support radius used for chord clipping; by default the
    largest support radius among the fields.
    """
    fields = list(fields)
    X = np.ascontiguousarray(X, dtype=float)
    XI = np.ascontiguousarray(XI, dtype=float)
    N = X.shape[0]
    if radius is None:
        radius = max((f.support_radius for f in fields), default=0.0)
    re, im = _real_parts(fields)
    if im is not None:
        return (field_moments(re, X, XI, K, quad, radius, kernels)
                + 1j * field_moments(im, X, XI, K, quad, radius, kernels))
    kern = kernels or backend.kernels
    gx, gw = quad.rule()
    t0, t1 = chord(X, XI, radius)
    blobs = [f for f in fields if isinstance(f, BlobField)]
    grids = [f for f in fields if isinstance(f, SymTensorField)]
    out = np.zeros((K + 1, N))
    profiles = sorted({f.profile for f in blobs})
    for prof in profiles:
        group = [f for f in blobs if f.profile == prof]

        def run(sl, group=group, prof=prof):
            coef = _blob_coefficients(group, XI[sl])
            if coef is None:
                return np.zeros((K + 1, sl.stop - sl.start))
            centers, widths, A, Bv = coef
            return kern.moments_blob(X[sl], XI[sl], t0[sl], t1[sl], gx, gw, quad.panels, centers, widths,
                                     0 if prof == "gaussian" else 1, np.ascontiguousarray(A),
                                     np.ascontiguousarray(Bv), K)

        out += np.concatenate(backend.map_chunks(run, N), axis=1)
    for f in grids:
        vals = np.ascontiguousarray(f.values.reshape(-1, f.ncomp))
        if not np.any(vals):
            continue
        g = f.grid

        def run(sl, f=f, vals=vals, g=g):
            cw = np.ascontiguousarray(st.contraction_weights(f.rank, XI[sl]))
            return kern.moments_grid(X[sl], XI[sl], t0[sl], t1[sl], gx, gw, quad.panels, vals,
                                     np.array(g.origin), np.array(g.spacing), np.array(g.counts, dtype=np.int64),
                                     float(f.support_radius), cw, K)

        out += np.concatenate(backend.map_chunks(run, N), axis=1)
    return out


def bundle_moments(bundle, X, XI, K, quad=DEFAULT_QUADRATURE, kernels=None):
    """I^{m,k}F for k = 0..K at every ray, shape (K+1, N)."""
    return field_moments(bundle.parts, X, XI, K, quad, bundle.support_radius, kernels)


def _as_bundle(F):
    return F if isinstance(F, TensorBundle) else TensorBundle.single(F)


def mrt_rank(f, k, ray, q=DEFAULT_QUADRATURE):
    """I^k f along one ray, for a single-rank field."""
    if k < 0:
        raise ValueError("moment order must be non-negative")
    return field_moments([f], np.array([ray.x]), np.array([ray.xi]), k, q)[k, 0]


def mrt_bundle(F, k, ray, q=DEFAULT_QUADRATURE):
    """I^{m,k}F along one ray."""
    if k < 0:
        raise ValueError("moment order must be non-negative")
    return bundle_moments(F, np.array([ray.x]), np.array([ray.xi]), k, q)[k, 0]


def mrt_sphere(F, k, x, theta, q=DEFAULT_QUADRATURE):
    """J^{m,k}F: the bundle transform at a unit direction."""
    theta = np.asarray(theta, dtype=float)
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    return mrt_bundle(F, k, Ray(x, theta), q)


@dataclass
class MomentSamples:
    """Sampled moments; ``values[k, i]`` is I^{m,k}F on ray i."""

    max_rank: int
    rays: RaySet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.rays):
            raise ValueError("values must have shape (K+1, number of rays)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("moment values must be finite")

    @property
    def K(self):
        return self.values.shape[0] - 1

    def to_csv(self, path):
        n = self.rays.dim
        header = ["k"] + [f"x{i + 1}" for i in range(n)] + [f"xi{i + 1}" for i in range(n)] + ["value"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(self.K + 1):
                for i in range(len(self.rays)):
                    w.writerow([k, *(repr(float(v)) for v in self.rays.X[i]), *(repr(float(v)) for v in self.rays.XI[i]),
                                repr(float(self.values[k, i]))])

    @classmethod
    def from_csv(cls, path, max_rank=None):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not body:
            raise ValueError("moment file has no rows")
        n = (len(header) - 2) // 2
        data = np.array(body, dtype=float)
        ks = data[:, 0].astype(int)
        K = int(ks.max())
        ray_rows = data[ks == 0, 1:1 + 2 * n]
        N = ray_rows.shape[0]
        values = np.zeros((K + 1, N))
        for k in range(K + 1):
            block = data[ks == k]
            if block.shape[0] != N or not np.array_equal(block[:, 1:1 + 2 * n], ray_rows):
                raise ValueError(f"moment order {k} is not sampled on the same rays as order 0")
            values[k] = block[:, -1]
        rays = RaySet(ray_rows[:, :n], ray_rows[:, n:])
        return cls(K if max_rank is None else max_rank, rays, values)


def sample_moments(F, rays, K, q=DEFAULT_QUADRATURE):
    """Batch transform of a bundle over a ray grid for k = 0..K."""
    if K < 0:
        raise ValueError("K must be non-negative")
    F = _as_bundle(F)
    return MomentSamples(F.max_rank, rays, bundle_moments(F, rays.X, rays.XI, K, q))


# --------------------------------------------------------------------------
# adjoint


@dataclass(frozen=True)
class AnnulusQuadrature:
    """Product rule on {xi_min <= |xi| <= xi_max} in dimension 2 or 3."""

    dim: int
    xi_min: float = 0.5
    xi_max: float = 2.0
    n_radial: int = 8
    n_angular: int = 48

    def __post_init__(self):
        if self.xi_min <= 0:
            raise ValueError("the direction annulus must exclude the origin")
        if self.dim not in (2, 3):
            raise ValueError("adjoint quadrature supports dimension 2 or 3")

    def nodes(self):
        """Direction nodes (M, dim) and weights (M,) including the rho^(n-1) Jacobian."""
        gx, gw = np.polynomial.legendre.leggauss(self.n_radial)
        rho = 0.5 * (self.xi_max - self.xi_min) * (gx + 1) + self.xi_min
        wr = 0.5 * (self.xi_max - self.xi_min) * gw * rho ** (self.dim - 1)
        if self.dim == 2:
            ang = 2 * np.pi * np.arange(self.n_angular) / self.n_angular
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
            wa = np.full(self.n_angular, 2 * np.pi / self.n_angular)
        else:
            cx, cw = np.polynomial.legendre.leggauss(self.n_angular // 2)
            az = 2 * np.pi * np.arange(self.n_angular) / self.n_angular
            C, AZ = np.meshgrid(cx, az, indexing="ij")
            S = np.sqrt(1 - C**2)
            dirs = np.stack([S * np.cos(AZ), S * np.sin(AZ), C], axis=-1).reshape(-1, 3)
            wa = (cw[:, None] * np.full(self.n_angular, 2 * np.pi / self.n_angular)[None, :]).ravel()
        xi = (rho[:, None, None] * dirs[None, :, :]).reshape(-1, self.dim)
        w = (wr[:, None] * wa[None, :]).ravel()
        return xi, w


def adjoint_values(psi, k, m, points, psi_radius, annulus=None, n_t=96):
    """[(I^k)^* psi]_c at ``points`` for every canonical component c of rank m.

    ``psi(y, xi)`` must accept arrays of shape (..., n) and vanish unless
    |y| <= psi_radius and xi lies in the annulus.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[1]
    annulus = annulus or AnnulusQuadrature(n)
    if annulus.xi_min <= 0:
        raise ValueError("direction grid touches the origin")
    xi, wxi = annulus.nodes()
    mono = st.contraction_weights(m, xi) / st.multiplicities(m, n)
    reach = np.max(np.linalg.norm(points, axis=1)) + psi_radius
    tg, tw = np.polynomial.legendre.leggauss(n_t)
    out = np.zeros((points.shape[0], st.component_count(m, n)))
    for j in range(xi.shape[0]):
        T = reach / np.linalg.norm(xi[j])
        t, wt = T * tg, T * tw
        y = points[:, None, :] - t[None, :, None] * xi[j]
        vals = psi(y, np.broadcast_to(xi[j], y.shape))
        s = (vals * (wt * t**k)[None, :]).sum(axis=1)
        out += wxi[j] * s[:, None] * mono[j][None, :]
    return out


def adjoint_apply(psi, k, m, grid, support_radius, psi_radius, annulus=None, n_t=96):
    """(I^k)^* psi on the nodes of ``grid`` inside ``support_radius``.

    The adjoint is a backprojection and is not compactly supported; the
    returned field is its restriction to the ball, which is all that enters
    a pairing with fields supported there.
    """
    nodes = grid.nodes().reshape(-1, grid.dim)
    inside = np.linalg.norm(nodes, axis=1) <= support_radius
    vals = np.zeros((nodes.shape[0], st.component_count(m, grid.dim)))
    if np.any(inside):
        vals[inside] = adjoint_values(psi, k, m, nodes[inside], psi_radius, annulus, n_t)
    return SymTensorField(m, grid, vals.reshape(grid.counts + (-1,)), support_radius)
