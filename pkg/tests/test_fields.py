import numpy as np
import pytest

from momray import symtensor as st
from momray.fields import (GridSpec, SymTensorField, TensorBundle, field_eval, read_bundle, read_field,
                           write_bundle, write_field)

from conftest import random_blob, random_bundle


def test_grid_covering_margin():
    g = GridSpec.covering(2, 1.0, 32)
    assert g.covers_ball(1.0, 2)
    assert not g.covers_ball(1.0, 3)
    with pytest.raises(ValueError):
        GridSpec((0, 0), (1, 1), (3, 8))
    with pytest.raises(ValueError):
        GridSpec((0, 0), (0, 1), (8, 8))


def test_constant_field_interpolates_exactly_and_vanishes_outside():
    g = GridSpec.covering(2, 1.0, 24)
    f = SymTensorField.from_function(1, g, lambda p: np.tile([2.0, -1.0], (len(p), 1)), 1.0)
    assert np.allclose(f.evaluate(np.array([[0.13, -0.41], [0.5, 0.5]])), [[2.0, -1.0]] * 2, atol=1e-14)
    assert np.array_equal(f.evaluate(np.array([[0.9, 0.9]])), [[0.0, 0.0]])


def test_cubic_phantom_reproduced_off_node():
    g = GridSpec.covering(3, 1.0, 16)
    poly = lambda p: (1 + p[:, 0] - 2 * p[:, 1] ** 2 + p[:, 0] * p[:, 1] * p[:, 2] + p[:, 2] ** 3)[:, None]  # noqa: E731
    # support larger than the test points so the ball cut never enters the stencils
    f = SymTensorField(0, g, poly(g.nodes().reshape(-1, 3)).reshape(g.counts + (1,)) *
                       (np.linalg.norm(g.nodes(), axis=-1) <= 1.0)[..., None], 1.0)
    pts = np.array([[0.11, -0.07, 0.05], [-0.2, 0.13, 0.02]])
    assert np.allclose(f.evaluate(pts), poly(pts), atol=1e-12)


def test_grid_field_rejects_values_outside_support():
    g = GridSpec.covering(2, 1.0, 16)
    with pytest.raises(ValueError):
        SymTensorField(0, g, np.ones(g.counts + (1,)), 1.0)


def test_blob_field_closed_form(rng):
    f = random_blob(2, 2, rng)
    p = np.array([0.1, -0.2])
    d = p - f.centers
    prof = np.exp(-0.5 * np.sum(d**2, axis=1) / f.widths**2)
    expect = sum(prof[b] * (f.amps[b] + d[b] @ f.slopes[b]) for b in range(f.nblobs))
    assert np.allclose(field_eval(f, p).data, expect, atol=1e-14)
    assert np.all(f.evaluate(np.array([[f.support_radius + 0.1, 0.0]])) == 0)


def test_blob_linear_maps_commute_with_evaluation(rng):
    f = random_blob(1, 3, rng)
    pts = rng.uniform(-0.5, 0.5, (10, 3))
    assert np.allclose(f.i_delta().evaluate(pts), f.evaluate(pts) @ st.i_delta_matrix(1, 3).T, atol=1e-14)
    assert np.allclose(f.contract(2).evaluate(pts), f.evaluate(pts)[:, [2]], atol=1e-14)
    assert np.allclose((f + f.scaled(-1.0)).evaluate(pts), 0.0, atol=1e-14)


def test_bundle_invariants(rng):
    with pytest.raises(ValueError):
        TensorBundle([random_blob(1, 2, rng)])
    with pytest.raises(ValueError):
        TensorBundle([random_blob(0, 2, rng), random_blob(1, 3, rng)])
    g1, g2 = GridSpec.covering(2, 1.0, 16), GridSpec.covering(2, 1.0, 20)
    with pytest.raises(ValueError):
        TensorBundle([SymTensorField.zeros(0, g1, 1.0), SymTensorField.zeros(1, g2, 1.0)])
    F = random_bundle(2, 2, rng)
    assert [p.rank for p in F.parts] == [0, 1, 2]
    assert F.padded(3).max_rank == 3


def test_field_file_round_trip(tmp_path, rng):
    g = GridSpec.covering(2, 1.5, 20)
    f = random_blob(2, 2, rng).sample(g, 1.5)
    write_field(tmp_path / "f", f)
    raw = np.fromfile(tmp_path / "f.bin", dtype="<f8")
    # canonical components vary fastest, then nodes in row-major order
    assert np.array_equal(raw[:3], f.values[0, 0])
    assert np.array_equal(raw[3:6], f.values[0, 1])
    g2 = read_field(tmp_path / "f")
    assert g2.grid == f.grid and np.array_equal(g2.values, f.values)


def test_field_file_size_mismatch(tmp_path, rng):
    g = GridSpec.covering(2, 1.5, 20)
    write_field(tmp_path / "f", random_blob(0, 2, rng).sample(g, 1.5))
    np.zeros(5).tofile(tmp_path / "f.bin")
    with pytest.raises(ValueError):
        read_field(tmp_path / "f")


def test_bundle_round_trip(tmp_path, rng):
    F = random_bundle(2, 2, rng)
    write_bundle(tmp_path / "b", F)
    exact = read_bundle(tmp_path / "b")
    sampled = read_bundle(tmp_path / "b", prefer_analytic=False)
    pts = rng.uniform(-0.3, 0.3, (20, 2))
    for p in range(3):
        assert np.array_equal(exact.parts[p].evaluate(pts), F.parts[p].evaluate(pts))
        assert np.allclose(sampled.parts[p].evaluate(pts), F.parts[p].evaluate(pts), atol=5e-3)
