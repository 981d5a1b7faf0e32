"""End-to-end localization, error metrics and loss-surface slices."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import Panorama, PointCloud, Pose, sample_rotations
from .initializer import CandidateSet, candidate_losses, initialize
from .optimizer import DECAY_FACTOR, PATIENCE, RefinementTrace, refine

T_THRESHOLD = 0.1  # meters
R_THRESHOLD = 5.0  # degrees


class LocalizationError(ValueError):
    """Inputs that cannot be localized at all (e.g. a degenerate cloud)."""


@dataclass
class LocalizerConfig:
    n_t: int = 50
    n_r: int = 32
    n_iter: int = 100
    k1: int = 50
    k2: int = 6
    alpha0: float = 0.1
    gravity_known: bool = False
    seed: int = 0
    decay_factor: float = DECAY_FACTOR
    patience: int = PATIENCE
    two_stage: bool = True

    def __post_init__(self):
        for name in ("n_t", "n_r", "n_iter", "k1", "k2", "patience"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.k2 > self.k1:
            raise ValueError("k2 must not exceed k1")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")

    @classmethod
    def gravity(cls, **overrides) -> "LocalizerConfig":
        """Defaults for inputs whose vertical axis is already aligned."""
        return cls(**{"n_r": 8, "gravity_known": True, **overrides})

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LocalizationResult:
    best_pose: Pose
    best_loss: float
    traces: list
    start_poses: CandidateSet
    timings: dict = field(default_factory=dict)
    candidate_count: int = 0
    failed: bool = False


@dataclass
class PoseError:
    t_error: float
    r_error: float

    @property
    def correct(self) -> bool:
        return self.t_error < T_THRESHOLD and self.r_error < R_THRESHOLD


def localize(cloud: PointCloud, image: Panorama, config: LocalizerConfig = None, workers: int = 1) -> LocalizationResult:
    """Recover the camera pose of ``image`` inside ``cloud``.

    Candidate grid -> ``k1`` by loss -> ``k2`` by color histogram -> Adam
    refinement of each -> lowest final loss.  ``workers`` only changes how
    the work is scheduled, never the result.
    """
    config = config or LocalizerConfig()
    lo, hi = cloud.bbox()
    if cloud.count < 3 or np.all(hi - lo < 1e-6):
        raise LocalizationError("point cloud is empty or degenerate")
    if config.k1 > config.n_t * config.n_r:
        raise ValueError("k1 must not exceed n_t * n_r")

    t0 = time.perf_counter()
    starts, n_candidates = initialize(
        cloud,
        image,
        config.n_t,
        config.n_r,
        config.k1,
        config.k2,
        config.gravity_known,
        config.seed,
        config.two_stage,
        workers,
    )
    t1 = time.perf_counter()

    def run(pose: Pose) -> RefinementTrace:
        return refine(
            cloud, image, pose, config.n_iter, config.alpha0, config.gravity_known, config.decay_factor, config.patience
        )

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            traces = list(pool.map(run, starts.poses))
    else:
        traces = [run(p) for p in starts.poses]
    t2 = time.perf_counter()

    finals = np.array([tr.final_loss for tr in traces])
    failed = not np.any(np.isfinite(finals))
    if failed:
        best_pose, best_loss = starts.poses[0], float("inf")
    else:
        best = int(np.argmin(finals))
        best_pose, best_loss = traces[best].final_pose, float(finals[best])
    return LocalizationResult(
        best_pose=best_pose,
        best_loss=best_loss,
        traces=traces,
        start_poses=starts,
        timings={"initialization": t1 - t0, "refinement": t2 - t1},
        candidate_count=n_candidates,
        failed=failed,
    )


def pose_error(estimate: Pose, truth: Pose) -> PoseError:
    t_err = float(np.linalg.norm(estimate.translation - truth.translation))
    cos = np.clip((np.trace(estimate.rotation.T @ truth.rotation) - 1.0) / 2.0, -1.0, 1.0)
    return PoseError(t_err, float(np.degrees(np.arccos(cos))))


def quartiles(values) -> tuple[float, float, float]:
    """Q1, median, Q3 with linear interpolation between order statistics."""
    q = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75], method="linear")
    return float(q[0]), float(q[1]), float(q[2])


def evaluate_batch(pairs) -> dict:
    """Quartiles of translation / rotation error and accuracy over ``(estimate, truth)`` pairs."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty batch")
    errors = [pose_error(e, t) for e, t in pairs]
    t_err = [e.t_error for e in errors]
    r_err = [e.r_error for e in errors]
    return {
        "count": len(errors),
        "t_error": dict(zip(("q1", "median", "q3"), quartiles(t_err))),
        "r_error": dict(zip(("q1", "median", "q3"), quartiles(r_err))),
        "accuracy": float(np.mean([e.correct for e in errors])),
    }


def inside_bbox(cloud: PointCloud, position) -> bool:
    lo, hi = cloud.bbox()
    return bool(np.all(position >= lo) and np.all(position <= hi))


def dump_loss_surface(
    cloud: PointCloud,
    image: Panorama,
    z: float = None,
    grid_res: int = 32,
    gravity_known: bool = False,
    n_r: int = None,
    seed: int = 0,
) -> np.ndarray:
    """Minimum sampling loss over the rotation set at each ``(x, y)`` of a grid.

    The grid is cell-centred over the cloud's bounding-box footprint at height
    ``z`` (bounding-box centre height by default).  Entry ``[i, j]`` belongs to
    the i-th x and j-th y position.
    """
    if grid_res < 2:
        raise ValueError("grid_res must be >= 2")
    if z is None:
        lo, hi = cloud.bbox()
        z = 0.5 * (lo[2] + hi[2])
    if n_r is None:
        n_r = 8 if gravity_known else 32
    rotations = sample_rotations(n_r, gravity_known, seed)
    xs, ys = surface_grid(cloud, grid_res)
    surface = np.empty((grid_res, grid_res))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            poses = [Pose(R, np.array([x, y, z])) for R in rotations]
            surface[i, j] = candidate_losses(cloud, image, poses).min()
    return surface


def surface_grid(cloud: PointCloud, grid_res: int) -> tuple[np.ndarray, np.ndarray]:
    """The x and y coordinates used by :func:`dump_loss_surface`."""
    lo, hi = cloud.bbox()
    xs = lo[0] + (hi[0] - lo[0]) * (np.arange(grid_res) + 0.5) / grid_res
    ys = lo[1] + (hi[1] - lo[1]) * (np.arange(grid_res) + 0.5) / grid_res
    return xs, ys
