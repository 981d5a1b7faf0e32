import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _support import central_difference, interior_points, perturb
from conftest import cached_scene
from omniloc.geometry import LocalPoseParam, Panorama, PointCloud, Pose, exp_so3, rot_z
from omniloc.sampler import (
    bilinear_sample,
    sampling_loss,
    sampling_loss_grad,
    sampling_loss_grad_reference,
    sampling_loss_reference,
)


@pytest.fixture
def image(rng):
    return Panorama(rng.random((6, 10, 3)))


def test_sample_at_node(image):
    res = bilinear_sample(image, np.array([[2.0, 3.0]]))
    np.testing.assert_array_equal(res.values[0], image.pixels[2, 3])


def test_sample_midpoint(image):
    res = bilinear_sample(image, np.array([[2.0, 3.5]]))
    np.testing.assert_allclose(res.values[0], 0.5 * (image.pixels[2, 3] + image.pixels[2, 4]), atol=1e-15)


def test_sample_wraps_columns(image):
    res = bilinear_sample(image, np.array([[1.0, 9.5]]))
    np.testing.assert_allclose(res.values[0], 0.5 * (image.pixels[1, 9] + image.pixels[1, 0]), atol=1e-15)


def test_sample_clamps_rows(image):
    res = bilinear_sample(image, np.array([[6.0, 4.0], [5.5, 4.0]]))
    np.testing.assert_allclose(res.values, image.pixels[[5, 5], [4, 4]], atol=1e-15)


def test_sample_nan_is_invalid(image):
    res = bilinear_sample(image, np.array([[np.nan, np.nan], [1.0, 1.0]]), with_jacobian=True)
    assert res.valid_mask.tolist() == [False, True]
    assert np.all(np.isfinite(res.jacobians))


@given(st.floats(0.1, 4.9).filter(lambda v: 0.01 < v % 1 < 0.99), st.floats(0.1, 9.8).filter(lambda v: 0.01 < v % 1 < 0.99))
@settings(max_examples=50)
def test_sample_jacobian_matches_finite_difference(row, col):
    image = Panorama(np.random.default_rng(5).random((6, 10, 3)))
    h = 1e-4
    jac = bilinear_sample(image, np.array([[row, col]]), with_jacobian=True).jacobians[0]
    for k, step in enumerate(([h, 0.0], [0.0, h])):
        hi = bilinear_sample(image, np.array([[row, col]]) + step).values[0]
        lo = bilinear_sample(image, np.array([[row, col]]) - step).values[0]
        np.testing.assert_allclose(jac[:, k], (hi - lo) / (2 * h), atol=1e-6)


def test_loss_constant_color_is_zero(rng):
    cloud = PointCloud(rng.normal(size=(50, 3)), np.tile([0.2, 0.4, 0.6], (50, 1)))
    image = Panorama(np.tile([0.2, 0.4, 0.6], (8, 16, 1)))
    assert sampling_loss(cloud, image, Pose.identity()) == pytest.approx(0.0, abs=1e-15)


def test_loss_maximum_distance(rng):
    cloud = PointCloud(rng.normal(size=(50, 3)), np.ones((50, 3)))
    image = Panorama(np.zeros((8, 16, 3)))
    assert sampling_loss(cloud, image, Pose.identity()) == pytest.approx(np.sqrt(3), abs=1e-12)


def test_no_valid_point_gives_sentinel():
    cloud = PointCloud(np.zeros((1, 3)), np.ones((1, 3)))
    image = Panorama(np.zeros((8, 16, 3)))
    assert sampling_loss(cloud, image, Pose.identity()) == np.inf
    g = sampling_loss_grad(cloud, image, LocalPoseParam.at(Pose.identity()))
    assert g.loss == np.inf and g.n_valid == 0
    assert np.all(g.vector == 0)


def test_kernel_matches_reference(scene, rng):
    for _ in range(5):
        pose = perturb(scene.oracle_pose, rng, 0.3, 10.0)
        assert sampling_loss(scene.cloud, scene.panorama, pose) == pytest.approx(
            sampling_loss_reference(scene.cloud, scene.panorama, pose), abs=1e-12
        )
        param = LocalPoseParam(rng.normal(scale=0.1, size=3), pose.translation, pose.rotation)
        a = sampling_loss_grad(scene.cloud, scene.panorama, param)
        b = sampling_loss_grad_reference(scene.cloud, scene.panorama, param)
        assert a.n_valid == b.n_valid
        np.testing.assert_allclose(a.vector, b.vector, atol=1e-12)


def test_constant_image_gives_zero_gradient(scene):
    image = Panorama(np.full((32, 64, 3), 0.3))
    g = sampling_loss_grad(scene.cloud, image, LocalPoseParam.at(scene.oracle_pose))
    assert np.all(g.vector == 0.0)


@pytest.mark.parametrize("seed", range(4))
def test_gradient_matches_finite_difference(seed):
    sc = cached_scene(seed)
    rng = np.random.default_rng(seed)
    pose = perturb(sc.oracle_pose, rng, 0.2, 5.0)
    param = LocalPoseParam(rng.normal(scale=0.05, size=3), pose.translation, pose.rotation)
    cloud = interior_points(sc.cloud, param.to_pose(), sc.panorama.height, sc.panorama.width)
    analytic = sampling_loss_grad(cloud, sc.panorama, param).vector
    numeric = central_difference(cloud, sc.panorama, param)
    np.testing.assert_allclose(analytic, numeric, rtol=1e-3)


def test_gradient_smaller_at_oracle():
    at_oracle, perturbed = [], []
    for seed in range(10):
        sc = cached_scene(seed)
        rng = np.random.default_rng(seed)
        at_oracle.append(np.linalg.norm(sampling_loss_grad(sc.cloud, sc.panorama, LocalPoseParam.at(sc.oracle_pose)).vector))
        p = perturb(sc.oracle_pose, rng, 0.2, 0.0)
        perturbed.append(np.linalg.norm(sampling_loss_grad(sc.cloud, sc.panorama, LocalPoseParam.at(p)).vector))
    assert np.mean(at_oracle) < np.mean(perturbed)


def test_loss_permutation_invariant(scene, rng):
    perm = rng.permutation(scene.cloud.count)
    shuffled = scene.cloud.subset(perm)
    pose = perturb(scene.oracle_pose, rng, 0.1, 3.0)
    assert sampling_loss(shuffled, scene.panorama, pose) == pytest.approx(sampling_loss(scene.cloud, scene.panorama, pose), abs=1e-12)


@given(st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
@settings(max_examples=20, deadline=None)
def test_loss_invariant_under_joint_rotation(yaw, tilt):
    sc = cached_scene(1)
    G = exp_so3([tilt, 0.3, yaw])
    pose = sc.oracle_pose
    moved = PointCloud(sc.cloud.positions @ G.T, sc.cloud.colors)
    a = sampling_loss(sc.cloud, sc.panorama, pose)
    b = sampling_loss(moved, sc.panorama, Pose(pose.rotation @ G.T, G @ pose.translation))
    assert a == pytest.approx(b, abs=1e-9)


def test_oracle_loss_small_for_dense_scene():
    sc = cached_scene(0, points_per_m2=2000, height=512, width=1024, noise_scale=4.0)
    assert sampling_loss(sc.cloud, sc.panorama, sc.oracle_pose) < 0.02


def test_loss_is_deterministic(scene):
    p = LocalPoseParam.at(Pose(rot_z(0.3), np.array([2.0, 1.5, 1.2])))
    a = sampling_loss_grad(scene.cloud, scene.panorama, p)
    b = sampling_loss_grad(scene.cloud, scene.panorama, p)
    assert a.loss == b.loss and np.array_equal(a.vector, b.vector)
