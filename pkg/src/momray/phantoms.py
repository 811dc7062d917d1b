"""Reproducible phantom bundles built from Gaussian or polynomial-bump blobs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import symtensor as st
from .fields import BlobField, TensorBundle
from .spherekernel import kernel_member

__all__ = ["PhantomSpec", "generate_phantom", "PHANTOM_KINDS"]

PHANTOM_KINDS = ("gaussian", "polynomial-bump", "i_delta-lifted", "kernel-member")


@dataclass
class PhantomSpec:
    """Recipe for a phantom bundle.

    Every rank gets ``n_blobs`` blobs with centers uniform in
    [-spread, spread]^dim, the given width, coefficients of largest
    magnitude ``amplitude`` and slopes scaled by ``slope_scale``. ``ranks``
    may override the random choices per rank with entries holding any of
    ``centers``, ``widths``, ``amps`` and ``slopes``.
    """

    kind: str = "gaussian"
    dim: int = 2
    max_rank: int = 1
    seed: int = 0
    n_blobs: int = 2
    width: float = 0.3
    spread: float = 0.3
    amplitude: float = 1.0
    slope_scale: float = 0.5
    ranks: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PHANTOM_KINDS:
            raise ValueError(f"unknown phantom kind {self.kind!r}; choose from {PHANTOM_KINDS}")
        if self.dim < 2:
            raise ValueError("phantoms need dimension at least 2")
        if self.max_rank < 0:
            raise ValueError("max_rank must be non-negative")
        if self.kind == "kernel-member" and self.max_rank < 2:
            raise ValueError("kernel members other than zero need max_rank >= 2")
        if self.width <= 0 or self.spread < 0 or self.n_blobs < 0 or self.amplitude < 0:
            raise ValueError("width must be positive; spread, n_blobs and amplitude non-negative")
        self.ranks = {int(k): v for k, v in self.ranks.items()}

    @property
    def profile(self):
        return "bump" if self.kind == "polynomial-bump" else "gaussian"

    def to_json(self):
        d = asdict(self)
        d["ranks"] = {str(k): v for k, v in self.ranks.items()}
        return d

    @classmethod
    def from_json(cls, d):
        return cls(**d)


def _random_blobs(spec, rank, rng):
    n = spec.dim
    ncomp = st.component_count(rank, n)
    over = spec.ranks.get(rank, {})
    nb = len(over["centers"]) if "centers" in over else spec.n_blobs
    centers = np.asarray(over.get("centers", rng.uniform(-spec.spread, spec.spread, (nb, n))), dtype=float)
    widths = np.asarray(over.get("widths", np.full(nb, spec.width)), dtype=float)
    amps = rng.standard_normal((nb, ncomp))
    if amps.size:
        amps *= spec.amplitude / np.max(np.abs(amps))
    amps = np.asarray(over.get("amps", amps), dtype=float)
    slopes = np.asarray(over.get("slopes", spec.slope_scale * spec.amplitude * rng.standard_normal((nb, n, ncomp))),
                        dtype=float)
    return BlobField(rank, n, centers, widths, amps.reshape(nb, ncomp), slopes.reshape(nb, n, ncomp), spec.profile)


def generate_phantom(spec):
    """The bundle described by ``spec``; identical specs give identical bundles.

    * ``gaussian`` / ``polynomial-bump``: independent random blobs per rank,
    * ``i_delta-lifted``: rank p is i_delta^{[p/2]} of a random blob field of
      rank p mod 2, the maximal isotropy the recovery ladder expects,
    * ``kernel-member``: random lower ranks completed so that the
      sphere-bundle transforms vanish.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "i_delta-lifted":
        parts = []
        for p in range(spec.max_rank + 1):
            base = _random_blobs(spec, p % 2, rng)
            parts.append(base.i_delta(p // 2) if p >= 2 else base)
        return TensorBundle(parts)
    parts = [_random_blobs(spec, p, rng) for p in range(spec.max_rank + 1)]
    bundle = TensorBundle(parts)
    if spec.kind == "kernel-member":
        return kernel_member(bundle)
    return bundle
