"""Tensor fields: grid-sampled fields, analytic blob fields and bundles.

Two concrete field types share one small interface (``rank``, ``dim``,
``support_radius``, ``evaluate`` and linear maps on components):

* :class:`SymTensorField` holds nodal values on a uniform grid and
  interpolates with tensor-product cubic Lagrange polynomials.
* :class:`BlobField` is a sum of smooth radial blobs, each carrying a
  constant and a linear tensor coefficient. It is evaluated in closed form,
  so transforms of it are limited only by quadrature accuracy.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import symtensor as st

__all__ = [
    "GridSpec",
    "TensorField",
    "SymTensorField",
    "BlobField",
    "TensorBundle",
    "field_eval",
    "field_map",
    "write_field",
    "read_field",
    "write_bundle",
    "read_bundle",
]

PROFILES = ("gaussian", "bump")
# Gaussian blobs are cut off at this many widths; exp(-32) ~ 1e-14.
GAUSS_CUTOFF = 8.0


@dataclass(frozen=True)
class GridSpec:
    origin: tuple
    spacing: tuple
    counts: tuple

    def __post_init__(self):
        origin = tuple(float(v) for v in self.origin)
        spacing = tuple(float(v) for v in self.spacing)
        counts = tuple(int(v) for v in self.counts)
        if not (len(origin) == len(spacing) == len(counts)):
            raise ValueError("origin, spacing and counts must have equal length")
        if any(h <= 0 for h in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")
        if any(c < 4 for c in counts):
            raise ValueError(f"need at least 4 nodes per axis, got {counts}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self):
        return len(self.counts)

    @property
    def upper(self):
        return tuple(o + h * (c - 1) for o, h, c in zip(self.origin, self.spacing, self.counts))

    @classmethod
    def covering(cls, dim, radius, count):
        """Centered cube grid whose box exceeds the ball by two cells per side."""
        if count < 8:
            raise ValueError("a covering grid needs at least 8 nodes per axis")
        half = radius / (1.0 - 4.0 / (count - 1))
        h = 2.0 * half / (count - 1)
        return cls((-half,) * dim, (h,) * dim, (count,) * dim)

    def axes(self):
        return [o + h * np.arange(c) for o, h, c in zip(self.origin, self.spacing, self.counts)]

    def nodes(self):
        """All node coordinates, shape (*counts, dim)."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def covers_ball(self, radius, margin_cells=2):
        lo = np.array(self.origin) + margin_cells * np.array(self.spacing)
        hi = np.array(self.upper) - margin_cells * np.array(self.spacing)
        return bool(np.all(lo <= -radius) and np.all(hi >= radius))

    def inside_box(self, points):
        points = np.asarray(points)
        lo, hi = np.array(self.origin), np.array(self.upper)
        tol = 1e-12 * np.maximum(1.0, np.abs(hi - lo))
        return np.all((points >= lo - tol) & (points <= hi + tol), axis=-1)

    def to_json(self):
        return {"origin": list(self.origin), "spacing": list(self.spacing), "counts": list(self.counts)}


class TensorField:
    """Common behaviour of symmetric tensor fields of a single rank."""

    rank: int
    dim: int
    support_radius: float

    @property
    def ncomp(self):
        return st.component_count(self.rank, self.dim)

    def evaluate(self, points):
        raise NotImplementedError

    def map_components(self, matrix, rank):
        raise NotImplementedError

    def scaled(self, c):
        return self.map_components(c * np.eye(self.ncomp), self.rank)

    def i_delta(self, power=1):
        return self.map_components(st.i_delta_pow_matrix(self.rank, self.dim, power), self.rank + 2 * power)

    def j_delta(self):
        return self.map_components(st.j_delta_matrix(self.rank, self.dim), self.rank - 2)

    def contract(self, axis):
        return self.map_components(st.contract_matrix(self.rank, self.dim, axis), self.rank - 1)

    def component(self, index):
        """Scalar field of one component, selected by a multi-index."""
        row = np.zeros((1, self.ncomp))
        row[0, st.canonical_indices(self.rank, self.dim).index(tuple(sorted(index)))] = 1.0
        return self.map_components(row, 0)

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__


class SymTensorField(TensorField):
    """Grid-sampled symmetric tensor field; ``values`` has shape (*counts, ncomp)."""

    def __init__(self, rank, grid, values, support_radius):
        self.rank = int(rank)
        self.grid = grid
        self.dim = grid.dim
        self.support_radius = float(support_radius)
        values = np.asarray(values)
        if not np.iscomplexobj(values):
            values = values.astype(float)
        expected = grid.counts + (st.component_count(self.rank, self.dim),)
        if values.shape != expected:
            raise ValueError(f"values must have shape {expected}, got {values.shape}")
        if not grid.covers_ball(self.support_radius):
            raise ValueError("grid must cover the support ball with a margin of 2 cells")
        outside = np.linalg.norm(grid.nodes(), axis=-1) > self.support_radius
        if np.any(values[outside] != 0):
            raise ValueError("values must vanish outside the support radius")
        values = values.copy()
        values.setflags(write=False)
        self.values = values

    @classmethod
    def from_function(cls, rank, grid, func, support_radius):
        """Sample ``func(points) -> (N, ncomp)`` and zero nodes outside the ball."""
        pts = grid.nodes().reshape(-1, grid.dim)
        vals = np.asarray(func(pts)).reshape(grid.counts + (-1,))
        vals = np.where((np.linalg.norm(grid.nodes(), axis=-1) > support_radius)[..., None], 0.0, vals)
        return cls(rank, grid, vals, support_radius)

    @classmethod
    def zeros(cls, rank, grid, support_radius):
        return cls(rank, grid, np.zeros(grid.counts + (st.component_count(rank, grid.dim),)), support_radius)

    def map_components(self, matrix, rank):
        return SymTensorField(rank, self.grid, self.values @ np.asarray(matrix).T, self.support_radius)

    def __add__(self, other):
        if not isinstance(other, SymTensorField) or other.grid != self.grid or other.rank != self.rank:
            raise ValueError("grid fields must share rank and grid to be added")
        return SymTensorField(self.rank, self.grid, self.values + other.values,
                              max(self.support_radius, other.support_radius))

    def evaluate(self, points):
        """Cubic interpolation at ``points`` (shape (..., dim)) -> (..., ncomp)."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        pts = points.reshape(-1, self.dim)
        radius = np.linalg.norm(pts, axis=-1)
        active = radius <= self.support_radius
        if np.any(active & ~self.grid.inside_box(pts)):
            raise ValueError("point inside the support ball lies outside the grid box")
        out = np.zeros((pts.shape[0], self.ncomp), dtype=self.values.dtype)
        if np.any(active):
            out[active] = _cubic_interp(self.values, self.grid, pts[active])
        return out.reshape(shape + (self.ncomp,))


def cubic_weights(s):
    """Lagrange weights of nodes 0..3 at local coordinate ``s`` (node 1 at s=1)."""
    return np.stack(
        [
            -(s - 1) * (s - 2) * (s - 3) / 6.0,
            s * (s - 2) * (s - 3) / 2.0,
            -s * (s - 1) * (s - 3) / 2.0,
            s * (s - 1) * (s - 2) / 6.0,
        ],
        axis=-1,
    )


def _cubic_interp(values, grid, pts):
    n = grid.dim
    base, weights = [], []
    for a in range(n):
        u = (pts[:, a] - grid.origin[a]) / grid.spacing[a]
        i0 = np.clip(np.floor(u).astype(int) - 1, 0, grid.counts[a] - 4)
        base.append(i0)
        weights.append(cubic_weights(u - i0))
    out = 0.0
    for offs in np.ndindex(*(4,) * n):
        w = np.ones(pts.shape[0])
        idx = []
        for a, o in enumerate(offs):
            w = w * weights[a][:, o]
            idx.append(base[a] + o)
        out = out + w[:, None] * values[tuple(idx)]
    return out


class BlobField(TensorField):
    """Sum of radial blobs with affine tensor coefficients.

    Component c at point p is ``sum_b prof_b(p) * (amps[b, c] + slopes[b, :, c] . (p - centers[b]))``
    where ``prof_b`` is ``exp(-|p - c_b|^2 / (2 w_b^2))`` for the Gaussian profile
    and ``(1 - |p - c_b|^2 / w_b^2)_+^4`` for the bump profile.
    """

    def __init__(self, rank, dim, centers, widths, amps, slopes=None, profile="gaussian"):
        if profile not in PROFILES:
            raise ValueError(f"unknown profile {profile!r}")
        self.rank, self.dim, self.profile = int(rank), int(dim), profile
        ncomp = st.component_count(self.rank, self.dim)
        self.centers = np.asarray(centers, dtype=float).reshape(-1, self.dim)
        nb = self.centers.shape[0]
        self.widths = np.asarray(widths, dtype=float).reshape(nb)
        if np.any(self.widths <= 0):
            raise ValueError("blob widths must be positive")
        amps = np.asarray(amps)
        self.amps = amps.astype(np.result_type(amps, float)).reshape(nb, ncomp)
        if slopes is None:
            slopes = np.zeros((nb, self.dim, ncomp), dtype=self.amps.dtype)
        self.slopes = np.asarray(slopes, dtype=np.result_type(slopes, float)).reshape(nb, self.dim, ncomp)
        for arr in (self.centers, self.widths, self.amps, self.slopes):
            arr.setflags(write=False)

    @classmethod
    def zeros(cls, rank, dim, profile="gaussian"):
        return cls(rank, dim, np.zeros((0, dim)), np.zeros(0), np.zeros((0, st.component_count(rank, dim))),
                   profile=profile)

    @property
    def nblobs(self):
        return self.centers.shape[0]

    @property
    def reach(self):
        """Radius of each blob's support."""
        return self.widths * (GAUSS_CUTOFF if self.profile == "gaussian" else 1.0)

    @property
    def support_radius(self):
        if self.nblobs == 0:
            return 0.0
        return float(np.max(np.linalg.norm(self.centers, axis=1) + self.reach))

    def is_zero(self):
        return self.nblobs == 0 or (not np.any(self.amps) and not np.any(self.slopes))

    def profiles(self, points):
        """Blob profiles at points (N, dim) -> (N, B) and offsets (N, B, dim)."""
        d = points[:, None, :] - self.centers[None, :, :]
        r2 = np.sum(d * d, axis=-1) / self.widths**2
        if self.profile == "gaussian":
            prof = np.where(r2 <= GAUSS_CUTOFF**2, np.exp(-0.5 * r2), 0.0)
        else:
            prof = np.clip(1.0 - r2, 0.0, None) ** 4
        return prof, d

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        pts = points.reshape(-1, self.dim)
        if self.nblobs == 0:
            return np.zeros(shape + (self.ncomp,), dtype=self.amps.dtype)
        prof, d = self.profiles(pts)
        coef = self.amps[None] + np.einsum("nbd,bdc->nbc", d, self.slopes)
        out = np.einsum("nb,nbc->nc", prof, coef)
        out = np.where((np.linalg.norm(pts, axis=-1) > self.support_radius)[:, None], 0.0, out)
        return out.reshape(shape + (self.ncomp,))

    def map_components(self, matrix, rank):
        matrix = np.asarray(matrix)
        return BlobField(rank, self.dim, self.centers, self.widths, self.amps @ matrix.T,
                         self.slopes @ matrix.T, self.profile)

    def __add__(self, other):
        if not isinstance(other, BlobField) or (other.rank, other.dim, other.profile) != (
            self.rank, self.dim, self.profile
        ):
            raise ValueError("blob fields must share rank, dimension and profile to be added")
        return BlobField(
            self.rank, self.dim,
            np.concatenate([self.centers, other.centers]),
            np.concatenate([self.widths, other.widths]),
            np.concatenate([self.amps, other.amps]),
            np.concatenate([self.slopes, other.slopes]),
            self.profile,
        )

    def sample(self, grid, support_radius=None):
        """Grid-sampled copy of this field."""
        radius = self.support_radius if support_radius is None else support_radius
        return SymTensorField.from_function(self.rank, grid, self.evaluate, radius)

    def to_json(self):
        def enc(a):
            a = np.asarray(a)
            if np.iscomplexobj(a):
                return {"re": a.real.tolist(), "im": a.imag.tolist()}
            return a.tolist()

        return {
            "rank": self.rank, "dim": self.dim, "profile": self.profile,
            "centers": self.centers.tolist(), "widths": self.widths.tolist(),
            "amps": enc(self.amps), "slopes": enc(self.slopes),
        }

    @classmethod
    def from_json(cls, d):
        def dec(v):
            if isinstance(v, dict):
                return np.asarray(v["re"]) + 1j * np.asarray(v["im"])
            return np.asarray(v, dtype=float)

        rank, dim = int(d["rank"]), int(d["dim"])
        ncomp = st.component_count(rank, dim)
        nb = len(d["widths"])
        return cls(rank, dim, np.asarray(d["centers"], dtype=float).reshape(nb, dim), d["widths"],
                   dec(d["amps"]).reshape(nb, ncomp), dec(d["slopes"]).reshape(nb, dim, ncomp),
                   d.get("profile", "gaussian"))


def field_eval(field, x):
    """Value of ``field`` at a single point as a SymTensor."""
    return st.SymTensor(field.rank, field.dim, field.evaluate(np.asarray(x, dtype=float)[None])[0])


def field_map(field, points):
    """Values of ``field`` at many points, shape (..., ncomp)."""
    return field.evaluate(points)


class TensorBundle:
    """A mixed-rank field F = f^(0) + ... + f^(m); ``parts[p]`` has rank p."""

    def __init__(self, parts):
        parts = list(parts)
        if not parts:
            raise ValueError("a bundle needs at least the rank-0 part")
        dims = {p.dim for p in parts}
        if len(dims) != 1:
            raise ValueError("all parts must share the dimension")
        for p, part in enumerate(parts):
            if part.rank != p:
                raise ValueError(f"part {p} has rank {part.rank}")
        grids = {part.grid for part in parts if isinstance(part, SymTensorField)}
        if len(grids) > 1:
            raise ValueError("grid parts must share one GridSpec")
        self.parts = tuple(parts)
        self.dim = dims.pop()

    @property
    def max_rank(self):
        return len(self.parts) - 1

    @property
    def support_radius(self):
        return max(p.support_radius for p in self.parts)

    @property
    def grid(self):
        for p in self.parts:
            if isinstance(p, SymTensorField):
                return p.grid
        return None

    @property
    def is_analytic(self):
        return all(isinstance(p, BlobField) for p in self.parts)

    @classmethod
    def zeros_like_rank(cls, m, dim, profile="gaussian"):
        return cls([BlobField.zeros(p, dim, profile) for p in range(m + 1)])

    @classmethod
    def single(cls, field, profile=None):
        """Bundle whose only nonzero part is ``field``."""
        prof = profile or getattr(field, "profile", "gaussian")
        parts = []
        for p in range(field.rank):
            if isinstance(field, SymTensorField):
                parts.append(SymTensorField.zeros(p, field.grid, field.support_radius))
            else:
                parts.append(BlobField.zeros(p, field.dim, prof))
        return cls(parts + [field])

    def __add__(self, other):
        m = max(self.max_rank, other.max_rank)
        a, b = self.padded(m), other.padded(m)
        return TensorBundle([x + y for x, y in zip(a.parts, b.parts)])

    def __neg__(self):
        return TensorBundle([-p for p in self.parts])

    def __sub__(self, other):
        return self + (-other)

    def scaled(self, c):
        return TensorBundle([p.scaled(c) for p in self.parts])

    __mul__ = scaled
    __rmul__ = scaled

    def padded(self, m):
        """Same bundle viewed with max rank ``m`` (extra parts zero)."""
        parts = list(self.parts)
        for p in range(len(parts), m + 1):
            ref = self.parts[0]
            if isinstance(ref, SymTensorField):
                parts.append(SymTensorField.zeros(p, ref.grid, ref.support_radius))
            else:
                parts.append(BlobField.zeros(p, self.dim, ref.profile))
        return TensorBundle(parts)

    def index_descent(self, axis):
        """The bundle (F)_axis = sum_p (p+1) f^(p+1) contracted on ``axis``, max rank m-1."""
        if self.max_rank < 1:
            raise ValueError("a scalar-only bundle has no contraction")
        return TensorBundle([(p + 1) * self.parts[p + 1].contract(axis) for p in range(self.max_rank)])

    def sample(self, grid):
        radius = self.support_radius
        return TensorBundle([p.sample(grid, radius) if isinstance(p, BlobField) else p for p in self.parts])


# --------------------------------------------------------------------------
# file I/O


def write_field(path, field):
    """Write ``path``.bin (little-endian float64) and ``path``.json sidecar."""
    path = Path(path)
    if not isinstance(field, SymTensorField):
        raise TypeError("only grid-sampled fields can be written; sample analytic fields first")
    if np.iscomplexobj(field.values):
        raise TypeError("the field file format stores real values only")
    path.parent.mkdir(parents=True, exist_ok=True)
    field.values.astype("<f8").tofile(path.with_suffix(".bin"))
    meta = {"dim": field.dim, "rank": field.rank, **field.grid.to_json(), "support_radius": field.support_radius}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2))


def read_field(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    for key in ("dim", "rank", "origin", "spacing", "counts", "support_radius"):
        if key not in meta:
            raise ValueError(f"field sidecar {path.with_suffix('.json')} lacks {key!r}")
    grid = GridSpec(meta["origin"], meta["spacing"], meta["counts"])
    if grid.dim != meta["dim"]:
        raise ValueError("sidecar dim disagrees with grid")
    ncomp = st.component_count(meta["rank"], meta["dim"])
    raw = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    expected = math.prod(grid.counts) * ncomp
    if raw.size != expected:
        raise ValueError(f"{path.with_suffix('.bin')} holds {raw.size} values, expected {expected}")
    return SymTensorField(meta["rank"], grid, raw.reshape(grid.counts + (ncomp,)), meta["support_radius"])


def write_bundle(directory, bundle, grid=None):
    """Write a bundle directory: one field pair per rank plus ``manifest.json``.

    Analytic bundles are sampled on ``grid`` and their blob description is
    kept in the manifest so they can be reloaded exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    analytic = None
    if bundle.is_analytic:
        if grid is None:
            grid = GridSpec.covering(bundle.dim, bundle.support_radius, 64)
        analytic = [p.to_json() for p in bundle.parts]
        sampled = bundle.sample(grid)
    else:
        sampled = bundle
    parts = []
    for p, part in enumerate(sampled.parts):
        write_field(directory / f"rank{p}", part)
        parts.append({"rank": p, "data": f"rank{p}.bin", "meta": f"rank{p}.json"})
    manifest = {"dim": bundle.dim, "max_rank": bundle.max_rank, "parts": parts, "analytic": analytic}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def read_bundle(directory, prefer_analytic=True):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if prefer_analytic and manifest.get("analytic"):
        return TensorBundle([BlobField.from_json(d) for d in manifest["analytic"]])
    parts = [read_field(directory / Path(entry["meta"]).with_suffix("")) for entry in manifest["parts"]]
    parts.sort(key=lambda f: f.rank)
    return TensorBundle(parts)
