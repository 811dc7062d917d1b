import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hst

from momray import backend
from momray import symtensor as st
from momray.fields import BlobField, GridSpec, TensorBundle
from momray.raytransform import (AnnulusQuadrature, MomentSamples, QuadratureSpec, Ray, RaySet, adjoint_apply,
                                 adjoint_values, bundle_moments, chord, field_moments, mrt_bundle, mrt_rank,
                                 mrt_sphere, parallel_beam, sample_moments)

from conftest import random_blob, random_bundle, unit_rays


def gaussian_unit():
    """exp(-|x|^2) in the plane."""
    return BlobField(0, 2, [[0.0, 0.0]], [math.sqrt(0.5)], [[1.0]])


def trapezoid_oracle(F, x, xi, k, n=200001):
    t0, t1 = chord(x[None], xi[None], F.support_radius)
    t = np.linspace(t0[0], t1[0], n)
    pts = x[None] + t[:, None] * xi[None]
    vals = sum(p.evaluate(pts) @ st.contraction_weights(p.rank, xi) for p in F.parts)
    return np.trapezoid(t**k * vals, t)


def test_gaussian_line_integral():
    f = gaussian_unit()
    ray = Ray([0.0, 0.0], [1.0, 0.0])
    assert mrt_rank(f, 0, ray) == pytest.approx(math.sqrt(math.pi), abs=1e-8)
    assert abs(mrt_rank(f, 1, ray)) <= 1e-10


def test_i_delta_of_scalar_on_unit_ray(rng):
    g = random_blob(0, 3, rng)
    x, xi = unit_rays(3, 5, 0.6, rng)
    for i in range(5):
        ray = Ray(x[i], xi[i])
        for k in range(3):
            assert mrt_rank(g.i_delta(), k, ray) == pytest.approx(mrt_rank(g, k, ray), abs=1e-12)


def test_bundle_special_cases(rng):
    f0 = random_blob(0, 2, rng)
    ray = Ray([0.1, -0.2], [0.6, 0.8])
    assert mrt_bundle(TensorBundle([f0]), 1, ray) == mrt_rank(f0, 1, ray)
    zero = TensorBundle.zeros_like_rank(2, 2)
    assert mrt_bundle(zero, 0, ray) == 0.0
    with pytest.raises(ValueError):
        mrt_bundle(zero, -1, ray)


def test_matches_trapezoid_oracle(rng):
    F = random_bundle(1, 2, rng)
    x = np.array([0.05, -0.1])
    xi = np.array([0.7, -1.1])
    for k in range(3):
        assert mrt_bundle(F, k, Ray(x, xi)) == pytest.approx(trapezoid_oracle(F, x, xi, k), abs=1e-7)


def test_parity_relation(rng):
    F = random_bundle(3, 3, rng)
    X, TH = unit_rays(3, 30, 0.6, rng)
    plus = [bundle_moments(TensorBundle.single(p), X, TH, 3) for p in F.parts]
    minus = bundle_moments(F, X, -TH, 3)
    for k in range(4):
        expect = sum((-1) ** (p - k) * plus[p][k] for p in range(4))
        assert np.allclose(minus[k], expect, atol=1e-12)


def test_kernel_stability_under_i_delta(rng):
    f = random_blob(1, 3, rng)
    X, TH = unit_rays(3, 10, 0.6, rng)
    for p in (1, 2):
        for i in range(10):
            for k in range(2):
                a = mrt_sphere(TensorBundle.single(f.i_delta(p)), k, X[i], TH[i])
                b = mrt_sphere(TensorBundle.single(f), k, X[i], TH[i])
                assert a == pytest.approx(b, abs=1e-7)
    with pytest.raises(ValueError):
        mrt_sphere(TensorBundle.single(f), 0, X[0], 2 * TH[0])


@given(hst.integers(0, 3), hst.integers(0, 3), hst.sampled_from([0.5, 2.0, 3.0]), hst.integers(0, 2**32 - 1))
def test_homogeneity(rank, k, lam, seed):
    rng = np.random.default_rng(seed)
    f = random_blob(rank, 2, rng)
    X, XI = unit_rays(2, 8, 0.6, rng, (0.5, 1.5))
    base = field_moments([f], X, XI, k)[k]
    scaled = field_moments([f], X, lam * XI, k)[k]
    assert np.all(np.abs(scaled - lam ** (rank - k - 1) * base) <= 1e-6 * np.abs(base) + 1e-10)


@given(hst.floats(-2, 2), hst.floats(-2, 2), hst.integers(0, 2**32 - 1))
def test_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    F, G = random_bundle(2, 2, rng), random_bundle(2, 2, rng)
    X, XI = unit_rays(2, 10, 0.6, rng)
    lhs = bundle_moments(F.scaled(a) + G.scaled(b), X, XI, 2)
    rhs = a * bundle_moments(F, X, XI, 2) + b * bundle_moments(G, X, XI, 2)
    scale = np.max(np.abs(bundle_moments(F, X, XI, 2))) * abs(a) + np.max(np.abs(bundle_moments(G, X, XI, 2))) * abs(b)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * max(scale, 1e-300) + 1e-300


def test_translation_along_the_ray(rng):
    F = random_bundle(2, 2, rng)
    X, XI = unit_rays(2, 10, 0.5, rng, (0.8, 1.2))
    s = 0.37
    base = bundle_moments(F, X, XI, 3)
    moved = bundle_moments(F, X + s * XI, XI, 3)
    assert np.allclose(moved[0], base[0], atol=1e-12)
    for k in range(1, 4):
        expect = sum(math.comb(k, i) * (-s) ** (k - i) * base[i] for i in range(k + 1))
        assert np.allclose(moved[k], expect, atol=1e-11)


def test_rays_missing_the_support_give_zero(rng):
    f = random_blob(1, 2, rng)
    R = f.support_radius
    X = np.array([[0.0, R + 0.5], [0.0, -R - 0.01]])
    XI = np.array([[1.0, 0.0], [1.0, 0.0]])
    assert np.all(field_moments([f], X, XI, 2) == 0.0)


@pytest.mark.parametrize("profile", ["gaussian", "bump"])
def test_backends_agree(rng, profile):
    compiled = pytest.importorskip("momray._kernels")
    python = backend.get_kernels("python")
    f = random_blob(2, 3, rng, nb=3, profile=profile)
    X, XI = unit_rays(3, 200, f.support_radius, rng, (0.5, 1.5))
    a = field_moments([f], X, XI, 3, kernels=compiled)
    b = field_moments([f], X, XI, 3, kernels=python)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-13)
    g = random_blob(1, 2, rng).sample(GridSpec.covering(2, 2.6, 48), 2.6)
    X2, XI2 = unit_rays(2, 200, 2.0, rng)
    assert np.allclose(field_moments([g], X2, XI2, 2, kernels=compiled),
                       field_moments([g], X2, XI2, 2, kernels=python), rtol=1e-12, atol=1e-13)


def test_grid_field_close_to_analytic(rng):
    f = random_blob(1, 2, rng)
    R = f.support_radius
    g = f.sample(GridSpec.covering(2, R, 96), R)
    X, XI = unit_rays(2, 50, 0.6, rng)
    a = field_moments([f], X, XI, 1)
    b = field_moments([g], X, XI, 1)
    assert np.max(np.abs(a - b)) <= 2e-3 * np.max(np.abs(a))


def test_complex_fields_split_into_parts(rng):
    f = random_blob(1, 2, rng)
    h = f.scaled(1.0 + 2.0j)
    X, XI = unit_rays(2, 10, 0.5, rng)
    assert np.allclose(field_moments([h], X, XI, 1), (1 + 2j) * field_moments([f], X, XI, 1), atol=1e-13)


def test_sampling_and_csv_round_trip(tmp_path, rng):
    F = random_bundle(1, 2, rng)
    rays, _, _ = parallel_beam(8, 5, F.support_radius)
    samples = sample_moments(F, rays, 1)
    single = sample_moments(F, RaySet(rays.X[3:4], rays.XI[3:4]), 1)
    assert single.values[1, 0] == mrt_bundle(F, 1, rays[3])
    samples.to_csv(tmp_path / "m.csv")
    header = (tmp_path / "m.csv").read_text().splitlines()[0]
    assert header == "k,x1,x2,xi1,xi2,value"
    back = MomentSamples.from_csv(tmp_path / "m.csv")
    assert np.array_equal(back.values, samples.values)
    assert np.array_equal(back.rays.X, rays.X) and np.array_equal(back.rays.XI, rays.XI)
    rays.save(tmp_path / "rays.json")
    again = RaySet.load(tmp_path / "rays.json")
    assert np.array_equal(again.X, rays.X)
    with pytest.raises(ValueError):
        MomentSamples(1, rays, np.full((2, len(rays)), np.nan))


def test_sampling_is_bitwise_deterministic_across_thread_counts(rng):
    F = random_bundle(2, 2, rng)
    X, XI = unit_rays(2, 3000, 0.6, rng)
    try:
        backend.set_threads(1)
        a = bundle_moments(F, X, XI, 2)
        backend.set_threads(4)
        b = bundle_moments(F, X, XI, 2)
    finally:
        backend.set_threads(None)
    assert np.array_equal(a, b)


def test_ray_validation():
    with pytest.raises(ValueError):
        Ray([0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        QuadratureSpec(panels=2)


# --- adjoint ------------------------------------------------------------------

def _psi(y, xi):
    r2 = np.sum(y * y, axis=-1)
    return np.where(r2 <= (8 * 0.3) ** 2, np.exp(-0.5 * r2 / 0.09), 0.0) * (xi[..., 0] + 0.5 * xi[..., 1] ** 2)


def _gl_box(half, count):
    x, w = np.polynomial.legendre.leggauss(count)
    X, Y = np.meshgrid(half * x, half * x, indexing="ij")
    W = np.outer(half * w, half * w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def test_adjoint_of_zero_is_zero():
    g = GridSpec.covering(2, 1.0, 16)
    out = adjoint_apply(lambda y, xi: np.zeros(y.shape[:-1]), 1, 2, g, 1.0, 1.0,
                        AnnulusQuadrature(2, n_radial=2, n_angular=8), n_t=16)
    assert not np.any(out.values)


@pytest.mark.parametrize("k,m", [(0, 0), (1, 1), (2, 2)])
def test_adjoint_duality(rng, k, m):
    f = random_blob(m, 2, rng, nb=1)
    ann = AnnulusQuadrature(2, n_radial=4, n_angular=24)
    xi, wxi = ann.nodes()
    # <I^k f, psi> over (x, xi)
    xs, wx = _gl_box(2.4, 48)
    X = np.repeat(xs, len(xi), axis=0)
    XI = np.tile(xi, (len(xs), 1))
    I = field_moments([f], X, XI, k)[k]
    lhs = np.sum(np.repeat(wx, len(xi)) * np.tile(wxi, len(xs)) * I * _psi(X, XI))
    # <f, (I^k)^* psi> over the support of f
    ys, wy = _gl_box(f.support_radius, 48)
    A = adjoint_values(_psi, k, m, ys, 2.4, ann, n_t=96)
    rhs = np.sum(wy[:, None] * st.multiplicities(m, 2) * f.evaluate(ys) * A)
    assert rhs == pytest.approx(lhs, rel=1e-3)


def test_adjoint_matches_monte_carlo():
    rng = np.random.default_rng(5)
    ann = AnnulusQuadrature(2, xi_min=0.5, xi_max=2.0, n_radial=8, n_angular=64)
    psi = lambda y, xi: np.prod(np.clip(1 - (y / 1.0) ** 2, 0, None) ** 2, axis=-1) * np.ones(xi.shape[:-1])  # noqa: E731
    x = np.array([0.2, -0.1])
    val = adjoint_values(psi, 0, 0, x[None], 1.5, ann, n_t=128)[0, 0]
    N = 400000
    rho = np.sqrt(rng.uniform(0.25, 4.0, N))
    ang = rng.uniform(0, 2 * np.pi, N)
    xi = np.column_stack([rho * np.cos(ang), rho * np.sin(ang)])
    T = (np.linalg.norm(x) + 1.5) / rho
    t = rng.uniform(-1, 1, N) * T
    samples = psi(x[None] - t[:, None] * xi, xi) * 2 * T * np.pi * (4.0 - 0.25)
    est, sigma = samples.mean(), samples.std() / math.sqrt(N)
    assert abs(val - est) <= 3 * sigma
