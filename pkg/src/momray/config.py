"""Versioned JSON run configuration and report schemas."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .finite_diff import FDStencil
from .phantoms import PhantomSpec
from .raytransform import QuadratureSpec

__all__ = ["SCHEMA_VERSION", "ConfigError", "RunConfig", "load_schema", "validate_report"]

SCHEMA_VERSION = 1

DEFAULT_TOLERANCES = {
    "identity": 1e-3,
    "inversion": 5e-2,
    "inversion_rank2": 8e-2,
    "inversion_rank3": 8e-2,
    "kernel": 1e-6,
    "structure": 0.1,
    "recovery": 8e-2,
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


@lru_cache(maxsize=None)
def load_schema(name):
    """A schema shipped in ``momray/schemas`` by file stem, e.g. ``"kernel_report"``."""
    text = resources.files("momray").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate_report(report, name):
    """Raise ``jsonschema.ValidationError`` unless ``report`` matches schema ``name``."""
    jsonschema.validate(report, load_schema(name))
    return report


@dataclass
class RunConfig:
    """Everything a command needs besides its input files.

    Nested sections mirror the JSON layout: ``grid.count``,
    ``rays.{n_angles, n_offsets, probe_count, rhos}``,
    ``quadrature.{panels, order}``, ``stencil.{h_x, h_xi, order}``,
    ``table_stencil`` (used for moments read from CSV),
    ``tolerances``, ``phantom`` (a PhantomSpec) and ``outputs``.
    """

    dim: int = 2
    max_rank: int = 1
    seed: int = 0
    grid_count: int = 64
    n_angles: int = 180
    n_offsets: int | None = None
    probe_count: int = 100
    rhos: tuple = (0.8, 0.9, 1.0, 1.1, 1.2)
    quadrature: QuadratureSpec = field(default_factory=lambda: QuadratureSpec(16))
    stencil: FDStencil = field(default_factory=FDStencil)
    # moments read from a file are interpolated, so differences need wider steps
    table_stencil: FDStencil = field(default_factory=lambda: FDStencil(5e-2, 5e-2))
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    moments: int | None = None
    phantom: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=lambda: {
        "report": "report.json", "fields": "fields", "moments": "moments.csv", "plots": "plots"})

    @classmethod
    def from_json(cls, data):
        try:
            jsonschema.validate(data, load_schema("config"))
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config: {exc.message}") from None
        cfg = cls()
        cfg.dim = data.get("dim", cfg.dim)
        cfg.max_rank = data.get("max_rank", cfg.max_rank)
        cfg.seed = data.get("seed", cfg.seed)
        cfg.grid_count = data.get("grid", {}).get("count", cfg.grid_count)
        rays = data.get("rays", {})
        cfg.n_angles = rays.get("n_angles", cfg.n_angles)
        cfg.n_offsets = rays.get("n_offsets", cfg.n_offsets)
        cfg.probe_count = rays.get("probe_count", cfg.probe_count)
        cfg.rhos = tuple(rays.get("rhos", cfg.rhos))
        try:
            cfg.quadrature = QuadratureSpec(**data.get("quadrature", {}))
            cfg.stencil = FDStencil(**data.get("stencil", {}))
            cfg.table_stencil = FDStencil(**{"h_x": 5e-2, "h_xi": 5e-2, **data.get("table_stencil", {})})
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from None
        cfg.tolerances.update(data.get("tolerances", {}))
        cfg.moments = data.get("moments", cfg.moments)
        cfg.phantom = copy.deepcopy(data.get("phantom", {}))
        cfg.outputs.update(data.get("outputs", {}))
        cfg.check()
        return cfg

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_json(data)

    def check(self):
        bad = [k for k, v in self.tolerances.items() if not v > 0]
        if bad:
            raise ConfigError(f"tolerances must be positive: {bad}")
        if self.moments is not None and self.moments > self.max_rank:
            raise ConfigError("moments cannot exceed max_rank")
        try:
            self.phantom_spec()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config phantom: {exc}") from None

    def phantom_spec(self, **overrides):
        """The PhantomSpec of this config; dim, max_rank and seed default to the top-level values."""
        d = {"dim": self.dim, "max_rank": self.max_rank, "seed": self.seed}
        d.update(self.phantom)
        d.update({k: v for k, v in overrides.items() if v is not None})
        return PhantomSpec.from_json(d)

    def to_json(self):
        return {
            "schema_version": SCHEMA_VERSION,
            "dim": self.dim,
            "max_rank": self.max_rank,
            "seed": self.seed,
            "grid": {"count": self.grid_count},
            "rays": {"n_angles": self.n_angles, "n_offsets": self.n_offsets,
                     "probe_count": self.probe_count, "rhos": list(self.rhos)},
            "quadrature": {"panels": self.quadrature.panels, "order": self.quadrature.order},
            "stencil": {"h_x": self.stencil.h_x, "h_xi": self.stencil.h_xi, "order": self.stencil.order},
            "table_stencil": {"h_x": self.table_stencil.h_x, "h_xi": self.table_stencil.h_xi,
                              "order": self.table_stencil.order},
            "tolerances": dict(self.tolerances),
            "moments": self.moments,
            "phantom": copy.deepcopy(self.phantom),
            "outputs": dict(self.outputs),
        }
