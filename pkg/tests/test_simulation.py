import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stereo_ot.errors import RejectionBudgetExceeded, ValidationError
from stereo_ot.geometry import DistanceSpec, fundamental_matrix, homogenize
from stereo_ot.simulation import (
    SweepConfig,
    make_random_rig,
    random_rotation,
    run_sweep,
    sample_scene,
    sample_spheres,
    stream,
)


def test_streams_are_independent_and_reproducible():
    a = stream(0, 3, "centers").random(5)
    assert np.array_equal(a, stream(0, 3, "centers").random(5))
    assert not np.array_equal(a, stream(0, 4, "centers").random(5))
    assert not np.array_equal(a, stream(0, 3, "radii").random(5))
    assert not np.array_equal(a, stream(1, 3, "centers").random(5))


def test_scene_is_deterministic_and_order_free():
    cfg = SweepConfig()
    late = sample_scene(cfg, 7, 0.01)
    sample_scene(cfg, 2, 0.0)
    again = sample_scene(cfg, 7, 0.01)
    assert np.array_equal(late.left_points, again.left_points)
    assert np.array_equal(late.world_points, again.world_points)


def test_geometry_shared_across_noise_levels():
    cfg = SweepConfig()
    clean, noisy = sample_scene(cfg, 1, 0.0), sample_scene(cfg, 1, 0.01)
    assert np.array_equal(clean.world_points, noisy.world_points)
    diff = noisy.left_points - clean.left_points
    diff2 = sample_scene(cfg, 1, 0.02).left_points - clean.left_points
    np.testing.assert_allclose(diff2, 2 * diff, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 1000))
def test_spheres_inside_box_and_disjoint(seed, index):
    cfg = SweepConfig(base_seed=seed)
    spheres = sample_spheres(cfg, index)
    assert len(spheres) == cfg.n_objects
    for k, s in enumerate(spheres):
        assert np.all(s.center >= cfg.center_low) and np.all(s.center <= cfg.center_high)
        assert cfg.radius_range[0] <= s.radius <= cfg.radius_range[1]
        for other in spheres[:k]:
            assert np.linalg.norm(s.center - other.center) > s.radius + other.radius


def test_points_lie_on_spheres_and_in_front():
    cfg = SweepConfig()
    for k in range(20):
        scene = sample_scene(cfg, k, 0.0)
        assert scene.world_points.shape == (50, 3)
        assert np.all(scene.world_points[:, 2] > 0)
        right_depth = scene.world_points @ scene.rig.rotation[2] + scene.rig.translation[2]
        assert np.all(right_depth > 0)


def test_zero_rotation_gives_plain_translation():
    cfg = SweepConfig(max_rotation_deg=0.0)
    rig = make_random_rig(cfg, np.random.default_rng(0))
    np.testing.assert_allclose(rig.rotation, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(rig.translation, [-1.0, 0.0, 0.0], atol=1e-15)


@pytest.mark.parametrize("law", ["euler-xyz", "axis-angle"])
def test_rotations_are_proper(law):
    rng = np.random.default_rng(1)
    for _ in range(100):
        r = random_rotation(rng, 15.0, law)
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)


def test_random_rig_baseline_is_one():
    cfg = SweepConfig()
    rng = np.random.default_rng(2)
    for _ in range(50):
        assert make_random_rig(cfg, rng).baseline == pytest.approx(1.0, abs=1e-12)


def test_noise_free_projections_satisfy_epipolar_constraint():
    scene = sample_scene(SweepConfig(), 0, 0.0)
    F = fundamental_matrix(scene.rig).matrix
    xh, yh = homogenize(scene.left_points), homogenize(scene.right_points)
    assert np.max(np.abs(np.einsum("ij,jk,ik->i", yh, F, xh))) < 1e-9


def test_config_validation():
    with pytest.raises(ValidationError):
        SweepConfig(n_scenes=0)
    with pytest.raises(ValidationError):
        SweepConfig(sigmas=(-0.1,))
    with pytest.raises(ValidationError):
        SweepConfig(rotation_law="quaternion")
    with pytest.raises(ValidationError):
        SweepConfig(distances=(DistanceSpec.ray(), DistanceSpec.ray()))
    with pytest.raises(ValidationError):
        SweepConfig.from_dict({"n_scene": 3})


def test_config_round_trip():
    cfg = SweepConfig(n_scenes=4, sigmas=(0.0, 0.2), rotation_law="axis-angle")
    assert SweepConfig.from_dict(cfg.to_dict()) == cfg


def test_crowded_box_exhausts_budget(monkeypatch):
    import stereo_ot.simulation as sim

    monkeypatch.setattr(sim, "REJECTION_BUDGET", 50)
    cfg = SweepConfig(n_objects=30, center_low=(0, 0, 3), center_high=(0.1, 0.1, 3.1))
    with pytest.raises(RejectionBudgetExceeded):
        sample_spheres(cfg, 0)


def test_sweep_shape_and_worker_independence():
    cfg = SweepConfig(n_scenes=3, sigmas=(0.0, 0.01, 0.05))
    one = run_sweep(cfg, workers=1)
    two = run_sweep(cfg, workers=2)
    assert one.rows() == two.rows()
    rows = one.rows()
    assert len(rows) == 3 * 3 * 3
    for r in rows:
        assert set(r) == set(one.COLUMNS)
        assert (r["object_mismatch_mean_pct"] is None) == (r["matcher"] != "hot")


def test_smoke_sweep_25_scenes():
    rows = run_sweep(SweepConfig(n_scenes=25)).rows()
    assert len(rows) == 45
    for r in rows:
        if r["sigma"] == 0.0 and r["distance"] in ("epi", "ray"):
            assert r["mismatch_mean_pct"] == 0.0
            assert r["w2_mean"] < 1e-10
