import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from momray import symtensor as st
from momray.fields import BlobField, TensorBundle

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_blob(rank, dim, rng, nb=2, width=0.3, spread=0.3, slope=0.5, profile="gaussian"):
    nc = st.component_count(rank, dim)
    amps = rng.standard_normal((nb, nc))
    amps /= np.max(np.abs(amps))
    return BlobField(rank, dim, rng.uniform(-spread, spread, (nb, dim)), np.full(nb, width), amps,
                     slope * rng.standard_normal((nb, dim, nc)), profile)


def random_bundle(m, dim, rng, **kw):
    return TensorBundle([random_blob(p, dim, rng, **kw) for p in range(m + 1)])


def unit_rays(n, count, radius, rng, scale=(1.0, 1.0)):
    X = rng.uniform(-0.5, 0.5, (count, n)) * radius
    XI = rng.standard_normal((count, n))
    XI *= (rng.uniform(*scale, count) / np.linalg.norm(XI, axis=1))[:, None]
    return X, XI


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
