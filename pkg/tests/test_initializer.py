import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import cached_scene
from omniloc.geometry import Panorama, PointCloud, Pose, rot_z
from omniloc.initializer import (
    HIST_BINS,
    CandidateSet,
    ColorHistogram,
    candidate_losses,
    filter_by_histogram,
    filter_by_loss,
    generate_candidates,
    histogram,
    histogram_intersection,
    initialize,
)


def cube_cloud(n=200, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.uniform(-1, 1, size=(n, 3)), rng.random((n, 3)))


def test_candidate_count():
    cands = generate_candidates(cube_cloud(), 50, 32, False)
    assert len(cands) <= 1600
    assert len(cands) % 32 == 0


def test_single_candidate_at_centre():
    cloud = cube_cloud()
    (pose,) = generate_candidates(cloud, 1, 1, True)
    lo, hi = cloud.bbox()
    np.testing.assert_allclose(pose.translation, (lo + hi) / 2)
    np.testing.assert_array_equal(pose.rotation, np.eye(3))


def test_candidates_inside_bbox_translation_major():
    cloud = cube_cloud()
    cands = generate_candidates(cloud, 27, 4, True)
    lo, hi = cloud.bbox()
    for p in cands:
        assert np.all((p.translation > lo) & (p.translation < hi))
    assert all(np.array_equal(cands[k].translation, cands[0].translation) for k in range(4))
    np.testing.assert_allclose(cands[1].rotation, rot_z(np.pi / 2), atol=1e-15)


def test_filter_by_loss_returns_all_sorted(scene):
    cands = generate_candidates(scene.cloud, 8, 4, False)
    out = filter_by_loss(scene.cloud, scene.panorama, cands, 100)
    assert len(out) == len(cands)
    assert out.losses == sorted(out.losses)


def test_filter_by_loss_tie_order():
    cloud = PointCloud(np.array([[1.0, 0, 0]]), np.full((1, 3), 0.5))
    image = Panorama(np.full((8, 16, 3), 0.5))
    cands = [Pose(rot_z(a), np.zeros(3)) for a in (0.1, 0.2, 0.3, 0.4)]
    out = filter_by_loss(cloud, image, cands, 3)
    assert out.indices == [0, 1, 2]


def test_sentinel_candidates_rank_last():
    cloud = PointCloud(np.array([[0.0, 0, 0], [0.0, 0, 0]]), np.full((2, 3), 0.5))
    image = Panorama(np.full((8, 16, 3), 0.2))
    cands = [Pose.identity(), Pose(np.eye(3), np.array([1.0, 0, 0]))]
    out = filter_by_loss(cloud, image, cands, 2)
    assert out.indices == [1, 0]
    assert out.losses[1] == np.inf


def test_oracle_ranks_first(scene):
    cands = generate_candidates(scene.cloud, 20, 16, False)
    cands.insert(37, scene.oracle_pose)
    out = filter_by_loss(scene.cloud, scene.panorama, cands, 5)
    assert out.indices[0] == 37


def test_histogram_basics():
    h = histogram(np.zeros((10, 3)))
    assert h.bins[0] == 1.0 and h.mass == 1.0
    h = histogram(np.ones((3, 3)))
    assert h.bins[HIST_BINS**3 - 1] == 1.0
    assert histogram(np.zeros((0, 3))).mass == 0.0


def test_histogram_uniform_colors():
    h = histogram(np.random.default_rng(0).random((1_000_000, 3)))
    expected = 1 / 512
    assert np.all(h.bins > expected / 3) and np.all(h.bins < expected * 3)


@given(st.lists(st.tuples(*[st.floats(0, 1)] * 3), min_size=1, max_size=50))
def test_histogram_mass_one(colors):
    assert abs(histogram(np.array(colors)).mass - 1) < 1e-9


def test_histogram_intersection_examples():
    a = np.zeros(512)
    a[:2] = [0.5, 0.5]
    b = np.zeros(512)
    b[:2] = [0.25, 0.75]
    assert histogram_intersection(ColorHistogram(a), ColorHistogram(b)) == pytest.approx(0.75)
    assert histogram_intersection(ColorHistogram(a), ColorHistogram(a)) == pytest.approx(1.0)
    c = np.zeros(512)
    c[5] = 1.0
    assert histogram_intersection(ColorHistogram(a), ColorHistogram(c)) == 0.0


def test_histogram_filter_constant_gray():
    cloud = PointCloud(np.random.default_rng(1).normal(size=(30, 3)), np.full((30, 3), 0.5))
    image = Panorama(np.full((8, 16, 3), 0.5))
    poses = [Pose(rot_z(a), np.zeros(3)) for a in np.linspace(0, 3, 5)]
    cs = CandidateSet(poses, [0.0] * 5, indices=list(range(5)))
    out = filter_by_histogram(cloud, image, cs, 5)
    assert out.scores == [1.0] * 5
    assert out.indices == list(range(5))


def test_histogram_filter_keeps_set_when_k2_is_full(scene):
    cands = generate_candidates(scene.cloud, 4, 4, False)
    top = filter_by_loss(scene.cloud, scene.panorama, cands, 6)
    out = filter_by_histogram(scene.cloud, scene.panorama, top, 6)
    assert sorted(out.indices) == sorted(top.indices)
    assert out.scores == sorted(out.scores, reverse=True)


def test_oracle_survives_histogram_stage():
    kept = 0
    for seed in range(20):
        sc = cached_scene(seed)
        cands = generate_candidates(sc.cloud, 20, 16, False)
        cands.append(sc.oracle_pose)
        top = filter_by_loss(sc.cloud, sc.panorama, cands, 50)
        assert len(cands) - 1 in top.indices
        kept += len(cands) - 1 in filter_by_histogram(sc.cloud, sc.panorama, top, 6).indices
    assert kept >= 19


def test_initialize_counts_and_determinism(scene):
    a, n = initialize(scene.cloud, scene.panorama, 8, 8, 10, 3)
    b, _ = initialize(scene.cloud, scene.panorama, 8, 8, 10, 3, workers=3)
    assert n == 64 and len(a) == 3
    assert a.indices == b.indices and a.losses == b.losses and a.scores == b.scores
    c, _ = initialize(scene.cloud, scene.panorama, 2, 2, 10, 6)
    assert len(c) == 4


def test_candidate_losses_thread_invariant(scene):
    cands = generate_candidates(scene.cloud, 10, 20, False)
    a = candidate_losses(scene.cloud, scene.panorama, cands, workers=1)
    b = candidate_losses(scene.cloud, scene.panorama, cands, workers=4)
    assert np.array_equal(a, b)
