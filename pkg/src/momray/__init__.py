"""Momentum ray transforms of mixed-rank symmetric tensor fields."""
from . import symtensor
from .backend import NAME as BACKEND
from .fields import BlobField, GridSpec, SymTensorField, TensorBundle, read_bundle, read_field, write_bundle, write_field
from .phantoms import PhantomSpec, generate_phantom
from .raytransform import (
    MomentSamples,
    QuadratureSpec,
    Ray,
    RaySet,
    bundle_moments,
    mrt_bundle,
    mrt_rank,
    mrt_sphere,
    parallel_beam,
    sample_moments,
)
from .symtensor import SymTensor

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BlobField",
    "GridSpec",
    "MomentSamples",
    "PhantomSpec",
    "QuadratureSpec",
    "Ray",
    "RaySet",
    "SymTensor",
    "SymTensorField",
    "TensorBundle",
    "bundle_moments",
    "generate_phantom",
    "mrt_bundle",
    "mrt_rank",
    "mrt_sphere",
    "parallel_beam",
    "read_bundle",
    "read_field",
    "sample_moments",
    "symtensor",
    "write_bundle",
    "write_field",
]
