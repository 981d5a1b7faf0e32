"""Starting-point search: candidate grid, loss filter, color-histogram filter."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .geometry import Panorama, PointCloud, Pose, sample_rotations, sample_translations
from .sampler import sampled_colors

HIST_BINS = 8


@dataclass
class CandidateSet:
    poses: list
    losses: list
    scores: Optional[list] = None
    indices: Optional[list] = None  # positions in the originally generated candidate list

    def __len__(self) -> int:
        return len(self.poses)


@dataclass
class ColorHistogram:
    bins: np.ndarray  # HIST_BINS^3, joint RGB

    @property
    def mass(self) -> float:
        return float(self.bins.sum())


def generate_candidates(cloud: PointCloud, n_t: int, n_r: int, gravity_known: bool, seed: int = 0) -> list[Pose]:
    """Translation-major Cartesian product of a bounding-box grid and sampled rotations."""
    if n_t < 1 or n_r < 1:
        raise ValueError("n_t and n_r must be >= 1")
    lo, hi = cloud.bbox()
    translations = sample_translations(lo, hi, n_t)
    rotations = sample_rotations(n_r, gravity_known, seed)
    return [Pose(R, t) for t in translations for R in rotations]


def _loss_chunk(cloud: PointCloud, image: Panorama, poses: list) -> np.ndarray:
    Rs = np.stack([p.rotation for p in poses])
    ts = np.stack([p.translation for p in poses])
    return _kernels.loss_many(cloud.positions, cloud.colors, image.pixels, Rs, ts)


def candidate_losses(cloud: PointCloud, image: Panorama, poses: list, workers: int = 1) -> np.ndarray:
    """Sampling loss at every pose, ``inf`` where nothing projects."""
    if not poses:
        return np.zeros(0)
    chunks = [poses[i : i + 64] for i in range(0, len(poses), 64)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda c: _loss_chunk(cloud, image, c), chunks))
    else:
        parts = [_loss_chunk(cloud, image, c) for c in chunks]
    return np.concatenate(parts)


def filter_by_loss(
    cloud: PointCloud, image: Panorama, candidates: list, k1: int, workers: int = 1
) -> CandidateSet:
    """Keep the ``k1`` lowest-loss candidates, ascending; ties keep input order."""
    if k1 < 1:
        raise ValueError("k1 must be >= 1")
    losses = candidate_losses(cloud, image, candidates, workers)
    order = np.argsort(losses, kind="stable")[:k1]
    return CandidateSet(
        poses=[candidates[i] for i in order],
        losses=[float(losses[i]) for i in order],
        indices=[int(i) for i in order],
    )


def histogram(colors: np.ndarray) -> ColorHistogram:
    """Joint 8x8x8 RGB histogram, L1-normalised (all zeros for no colors)."""
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    if colors.shape[0] == 0:
        return ColorHistogram(np.zeros(HIST_BINS**3))
    idx = np.minimum(np.floor(colors * HIST_BINS).astype(np.int64), HIST_BINS - 1)
    idx = np.maximum(idx, 0)
    flat = (idx[:, 0] * HIST_BINS + idx[:, 1]) * HIST_BINS + idx[:, 2]
    counts = np.bincount(flat, minlength=HIST_BINS**3).astype(np.float64)
    return ColorHistogram(counts / colors.shape[0])


def histogram_intersection(a: ColorHistogram, b: ColorHistogram) -> float:
    return float(np.minimum(a.bins, b.bins).sum())


def histogram_score(cloud: PointCloud, image: Panorama, pose: Pose, cloud_hist: Optional[ColorHistogram] = None) -> float:
    """Overlap between the colors sampled at ``pose`` and the cloud's own colors."""
    if cloud_hist is None:
        cloud_hist = histogram(cloud.colors)
    res = sampled_colors(cloud, image, pose)
    return histogram_intersection(histogram(res.values[res.valid_mask]), cloud_hist)


def filter_by_histogram(cloud: PointCloud, image: Panorama, candidates: CandidateSet, k2: int) -> CandidateSet:
    """Keep the ``k2`` candidates whose sampled colors best match the cloud colors.

    Scores sort descending; ties keep the incoming (loss-rank) order.
    """
    cloud_hist = histogram(cloud.colors)
    scores = np.array([histogram_score(cloud, image, p, cloud_hist) for p in candidates.poses])
    order = np.argsort(-scores, kind="stable")[:k2]
    return CandidateSet(
        poses=[candidates.poses[i] for i in order],
        losses=[candidates.losses[i] for i in order],
        scores=[float(scores[i]) for i in order],
        indices=[candidates.indices[i] for i in order] if candidates.indices is not None else None,
    )


def initialize(
    cloud: PointCloud,
    image: Panorama,
    n_t: int,
    n_r: int,
    k1: int,
    k2: int,
    gravity_known: bool = False,
    seed: int = 0,
    two_stage: bool = True,
    workers: int = 1,
) -> tuple[CandidateSet, int]:
    """Generate candidates and reduce them to at most ``k2`` starting poses.

    ``two_stage=False`` skips the histogram stage and keeps the ``k2``
    lowest-loss candidates directly.  Returns the set and the number of
    generated candidates.
    """
    candidates = generate_candidates(cloud, n_t, n_r, gravity_known, seed)
    if not two_stage:
        return filter_by_loss(cloud, image, candidates, k2, workers), len(candidates)
    top = filter_by_loss(cloud, image, candidates, k1, workers)
    return filter_by_histogram(cloud, image, top, k2), len(candidates)
