import numpy as np
import pytest

from omniloc.geometry import PointCloud, rot_z
from omniloc.render import render
from omniloc.synth import MAX_POINTS, RigidTransform, augment_pose, generate_scene


def test_fixed_seed_is_bit_identical():
    a, b = generate_scene(11), generate_scene(11)
    assert np.array_equal(a.cloud.positions, b.cloud.positions)
    assert np.array_equal(a.cloud.colors, b.cloud.colors)
    assert np.array_equal(a.panorama.pixels, b.panorama.pixels)
    assert a.descriptor == b.descriptor


def _box_area(lo, hi, extent):
    dx, dy, dz = np.subtract(hi, lo)
    area = dx * dy
    area += dy * dz * ((lo[0] > 0) + (hi[0] < extent[0]))
    area += dx * dz * ((lo[1] > 0) + (hi[1] < extent[1]))
    return area


@pytest.mark.parametrize("seed", range(5))
def test_point_count_matches_area(seed):
    extent = (4.0, 3.0, 2.5)
    sc = generate_scene(seed, room_extent=extent, points_per_m2=500)
    room = 2 * (4 * 3 + 4 * 2.5 + 3 * 2.5)
    boxes = sc.descriptor["boxes"]
    covered = sum((hi[0] - lo[0]) * (hi[1] - lo[1]) for lo, hi in boxes)
    # floor under the boxes and wall strips behind them are hidden; box surfaces add area
    hidden_walls = sum(
        (hi[2] - lo[2]) * ((hi[1] - lo[1]) * ((lo[0] == 0) + (hi[0] == extent[0])) + (hi[0] - lo[0]) * ((lo[1] == 0) + (hi[1] == extent[1])))
        for lo, hi in boxes
    )
    area = room - covered - hidden_walls + sum(_box_area(lo, hi, extent) for lo, hi in boxes)
    assert abs(sc.cloud.count - 500 * area) < 0.1 * 500 * area
    # the plain surface total is within the same tolerance
    assert abs(sc.cloud.count - 500 * room) < 0.1 * 500 * room


@pytest.mark.parametrize("seed", range(10))
def test_oracle_inside_bbox_and_panorama_consistent(seed):
    sc = generate_scene(seed)
    lo, hi = sc.cloud.bbox()
    assert np.all((sc.oracle_pose.translation > lo) & (sc.oracle_pose.translation < hi))
    d = sc.descriptor
    again = render(sc.cloud, sc.oracle_pose, d["height"], d["width"], d["splat_radius_px"])
    assert np.array_equal(again.image.pixels, sc.panorama.pixels)


def test_gravity_aligned_is_yaw_only():
    R = generate_scene(4, gravity_aligned=True).oracle_pose.rotation
    np.testing.assert_allclose(R[2], [0, 0, 1], atol=1e-15)


def test_semantic_flat_palette():
    sc = generate_scene(2, texture_mode="semantic_flat")
    assert len(np.unique(sc.cloud.colors, axis=0)) <= 12


def test_checker_has_two_colors_per_surface():
    sc = generate_scene(2, texture_mode="checker")
    assert len(np.unique(sc.cloud.colors, axis=0)) <= 2 * 11


def test_invalid_parameters():
    with pytest.raises(ValueError):
        generate_scene(0, room_extent=(0.5, 3, 3))
    with pytest.raises(ValueError):
        generate_scene(0, points_per_m2=0)
    with pytest.raises(ValueError):
        generate_scene(0, texture_mode="marble")
    with pytest.raises(ValueError, match=str(MAX_POINTS)):
        generate_scene(0, points_per_m2=1e6)


def test_augment_is_deterministic():
    cloud = generate_scene(0).cloud
    a, ta = augment_pose(cloud, 3)
    b, tb = augment_pose(cloud, 3)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(ta.rotation, tb.rotation) and np.array_equal(ta.translation, tb.translation)
    assert np.all((ta.translation >= 0) & (ta.translation <= 3))
    np.testing.assert_allclose(ta.rotation[2], [0, 0, 1], atol=1e-15)


def test_augment_angle_distribution():
    cloud = PointCloud(np.array([[1.0, 0, 0]]), np.zeros((1, 3)))
    thetas = [np.arctan2(t.rotation[1, 0], t.rotation[0, 0]) % (2 * np.pi) for _, t in (augment_pose(cloud, s) for s in range(10_000))]
    assert abs(np.mean(thetas) - np.pi / 2) < 0.05
    assert max(thetas) <= np.pi


def test_augmented_pose_renders_same_image():
    sc = generate_scene(5)
    cloud, T = augment_pose(sc.cloud, 5)
    pose = T.apply_to_pose(sc.oracle_pose)
    a = render(cloud, pose, 128, 256).image.pixels
    assert np.max(np.abs(a - sc.panorama.pixels)) <= 1e-6


def test_rigid_transform_points():
    T = RigidTransform(rot_z(np.pi / 2), np.array([1.0, 0, 0]))
    np.testing.assert_allclose(T.apply(np.array([[1.0, 0, 0]])), [[1, 1, 0]], atol=1e-15)
