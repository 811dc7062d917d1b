import math
import time

import numpy as np
import pytest

from momray import symtensor as st
from momray.fields import BlobField, TensorBundle
from momray.inversion import (MIN_ANGLES, MomentTable, PipelineConfig, component_terms, full_inverse_pipeline,
                              invert_scalar_xray, recover_component, recover_components, recover_scalar_moment)
from momray.raytransform import RaySet, bundle_moments, field_moments, sample_moments

from conftest import random_blob, random_bundle, unit_rays


def moments_of(F, K=None):
    K = F.max_rank if K is None else K
    return lambda X, XI: bundle_moments(F, X, XI, K)


def component_xray(part, idx, X, XI):
    return field_moments([part.component(idx)], X, XI, 0)[0]


def probe(n, count, rng):
    return RaySet(*unit_rays(n, count, 0.4, rng, (0.8, 1.2)))


# --- component formula ----------------------------------------------------------

def test_component_terms_average_over_orderings():
    per = component_terms(2, (0, 1), by_permutation=True)
    avg = component_terms(2, (0, 1))
    assert len(per) == 2
    for key, c in avg.items():
        assert c == pytest.approx(sum(t.get(key, 0.0) for t in per) / 2)
    with pytest.raises(ValueError):
        component_terms(1, (0, 1))


def test_scalar_only_bundle(rng):
    F = TensorBundle([random_blob(0, 2, rng)])
    rays = probe(2, 5, rng)
    got = recover_scalar_moment(moments_of(F), 0, rays)
    assert np.allclose(got, bundle_moments(F, rays.X, rays.XI, 0)[0], atol=1e-14)


def test_pure_vector_field(rng):
    f1 = random_blob(1, 2, rng)
    F = TensorBundle([BlobField.zeros(0, 2), f1])
    rays = probe(2, 8, rng)
    vals, _, _ = recover_components(moments_of(F), 1, rays)
    scale = max(np.max(np.abs(component_xray(f1, (a,), rays.X, rays.XI))) for a in range(2))
    assert np.max(np.abs(vals[(0, ())])) <= 1e-5 * scale
    for a in range(2):
        assert np.allclose(vals[(1, (a,))], component_xray(f1, (a,), rays.X, rays.XI), atol=1e-5 * scale)


@pytest.mark.parametrize("m,n", [(1, 2), (2, 2), (2, 3), (3, 2)])
def test_components_match_scalar_transforms(rng, m, n):
    F = random_bundle(m, n, rng)
    rays = probe(n, 10, rng)
    vals, spread, undetermined = recover_components(moments_of(F), m, rays)
    assert undetermined == []
    tol = 5e-3 if m <= 2 else 2e-2
    for j in range(m + 1):
        for idx in st.canonical_indices(j, n):
            ref = component_xray(F.parts[j], idx, rays.X, rays.XI)
            assert np.max(np.abs(vals[(j, idx)] - ref)) <= tol * max(np.max(np.abs(ref)), 1e-3)
            assert spread[(j, idx)] >= 0.0


def test_single_component_entry_point(rng):
    F = random_bundle(2, 2, rng)
    rays = probe(2, 4, rng)
    got = recover_component(moments_of(F), 2, 2, (0, 1), rays)
    ref = component_xray(F.parts[2], (0, 1), rays.X, rays.XI)
    assert np.max(np.abs(got - ref)) <= 5e-3 * np.max(np.abs(ref))
    with pytest.raises(ValueError):
        recover_component(moments_of(F), 2, 2, (0,), rays)
    with pytest.raises(ValueError):
        recover_component(moments_of(F), 2, 1, (5,), rays)


def test_zero_bundle_recovers_zero(rng):
    F = TensorBundle.zeros_like_rank(2, 2)
    vals, _, _ = recover_components(moments_of(F), 2, probe(2, 5, rng))
    assert all(not np.any(v) for v in vals.values())


def test_partial_moments_leave_top_ranks_undetermined(rng):
    F = random_bundle(2, 2, rng)
    rays = probe(2, 5, rng)
    vals, _, undetermined = recover_components(moments_of(F, 1), 2, rays, K=1)
    assert undetermined == [2]
    assert {j for j, _ in vals} == {0, 1}
    ref = component_xray(F.parts[1], (1,), rays.X, rays.XI)
    assert np.max(np.abs(vals[(1, (1,))] - ref)) <= 5e-3 * np.max(np.abs(ref))
    _, _, undetermined = recover_components(moments_of(F, 0), 2, rays, K=0)
    assert undetermined == [1, 2]


def test_rank_ceiling(rng):
    F = random_bundle(1, 2, rng)
    with pytest.raises(ValueError):
        recover_components(moments_of(F), 4, probe(2, 2, rng))


# --- filtered backprojection ----------------------------------------------------

def gaussian_sinogram(n_angles, offsets, w, center=(0.0, 0.0)):
    phis = np.pi * np.arange(n_angles) / n_angles
    normal = np.stack([-np.sin(phis), np.cos(phis)], axis=1)
    shift = normal @ np.asarray(center)
    s = offsets[None, :] - shift[:, None]
    return phis, w * math.sqrt(2 * math.pi) * np.exp(-0.5 * s**2 / w**2)


def test_fbp_of_centered_gaussian():
    w = 0.3
    offsets = np.linspace(-2.5, 2.5, 201)
    phis, sino = gaussian_sinogram(180, offsets, w)
    g = np.linspace(-1.2, 1.2, 49)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    rec = invert_scalar_xray(sino, phis, offsets, pts)
    true = np.exp(-0.5 * np.sum(pts**2, axis=1) / w**2)
    assert np.linalg.norm(rec - true) <= 3e-2 * np.linalg.norm(true)


def test_fbp_locates_a_shifted_bump():
    offsets = np.linspace(-2.0, 2.0, 161)
    phis, sino = gaussian_sinogram(120, offsets, 0.15, center=(0.4, -0.25))
    g = np.linspace(-1.0, 1.0, 81)
    pts = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    rec = invert_scalar_xray(sino, phis, offsets, pts)
    assert np.allclose(pts[np.argmax(rec)], [0.4, -0.25], atol=0.026)


def test_fbp_input_validation():
    offsets = np.linspace(-1, 1, 41)
    assert not np.any(invert_scalar_xray(np.zeros((90, 41)), np.pi * np.arange(90) / 90, offsets, [[0.1, 0.2]]))
    with pytest.raises(ValueError):
        invert_scalar_xray(np.zeros((MIN_ANGLES - 1, 41)), np.zeros(MIN_ANGLES - 1), offsets, [[0.0, 0.0]])
    with pytest.raises(ValueError):
        invert_scalar_xray(np.zeros((90, 3)), np.zeros(90), np.array([0.0, 0.1, 0.3]), [[0.0, 0.0]])


# --- moment table ---------------------------------------------------------------

def test_moment_table_interpolates_moments(rng):
    F = random_bundle(1, 2, rng)
    table = MomentTable.from_bundle(F, 128, 129, (0.8, 0.9, 1.0, 1.1, 1.2), 2)
    X, XI = unit_rays(2, 50, 0.6, rng, (0.85, 1.15))
    X = X + rng.uniform(-1, 1, (50, 1)) * XI  # base points off the table's normal line
    got = table(X, XI)
    ref = bundle_moments(F, X, XI, 2)
    assert got.shape == ref.shape
    assert np.max(np.abs(got - ref)) <= 1e-3 * np.max(np.abs(ref))


def test_moment_table_from_samples(rng):
    F = random_bundle(1, 2, rng)
    rhos = (0.9, 1.0, 1.1, 1.2)
    rays, _, _ = MomentTable.grid_rays(16, 9, rhos, F.support_radius)
    table = MomentTable.from_samples(sample_moments(F, rays, 1))
    direct = MomentTable.from_bundle(F, 16, 9, rhos, 1)
    assert np.allclose(table.values, direct.values, atol=1e-13)
    shuffled = RaySet(rays.X[1:], rays.XI[1:])
    with pytest.raises(ValueError):
        MomentTable.from_samples(sample_moments(F, shuffled, 1))


# --- pipeline -------------------------------------------------------------------

def test_small_planar_pipeline(rng):
    F = random_bundle(1, 2, rng)
    cfg = PipelineConfig(n_angles=90, grid_count=48)
    t0 = time.perf_counter()
    est, report = full_inverse_pipeline(F, cfg)
    assert time.perf_counter() - t0 < 60
    assert est.max_rank == 1
    assert report.status == "ok" and report.undetermined_ranks == []
    assert all(e <= 5e-2 for e in report.rank_errors.values())
    assert set(report.component_errors) == {"0:", "1:0", "1:1"}
    data = report.to_json()
    assert data["kind"] == "full_inverse" and data["steps"][0]["angles"] == 90


def test_pipeline_with_partial_moments(rng):
    F = random_bundle(1, 2, rng)
    _, report = full_inverse_pipeline(F, PipelineConfig(n_angles=60, grid_count=32, moments=0))
    assert report.undetermined_ranks == [1]
    assert set(report.rank_errors) == {"0"}


def test_pipeline_from_a_table_needs_a_radius(rng):
    F = random_bundle(1, 2, rng)
    table = MomentTable.from_bundle(F, 16, 9, (0.9, 1.0, 1.1, 1.2), 1)
    with pytest.raises(ValueError):
        full_inverse_pipeline(table, PipelineConfig())


def test_pipeline_in_three_dimensions(rng):
    F = TensorBundle([random_blob(0, 3, rng), random_blob(1, 3, rng)])
    est, report = full_inverse_pipeline(F, PipelineConfig(n_angles=60, grid_count=32, slices=(0.0, 0.1)))
    assert est["values"][1].shape[:2] == (2, 32 * 32)
    assert max(report.rank_errors.values()) <= 6e-2


def test_scalar_moment_entry_matches_rank_zero_component(rng):
    F = random_bundle(2, 3, rng)
    rays = probe(3, 6, rng)
    a = recover_scalar_moment(moments_of(F), 2, rays)
    b = recover_component(moments_of(F), 2, 0, (), rays)
    vals, _, _ = recover_components(moments_of(F), 2, rays)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))
    assert np.max(np.abs(a - vals[(0, ())])) <= 1e-12 * np.max(np.abs(a))


def test_pipeline_on_zero_bundle():
    est, report = full_inverse_pipeline(TensorBundle.zeros_like_rank(1, 2), PipelineConfig(n_angles=60, grid_count=16))
    assert all(e == 0.0 for e in report.rank_errors.values())
    assert all(not p.values.any() for p in est.parts)
