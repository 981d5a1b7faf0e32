"""Synthetic rooms with known camera poses, used as ground truth everywhere.

A scene is an axis-aligned box room (floor, ceiling, four walls) with a few
boxes standing on the floor, point-sampled on a jittered grid and colored
by one of three texture modes.  The panorama is the room rendered at a
random pose in the free interior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates

from .geometry import Panorama, PointCloud, Pose, _apply_rt, random_rotation, rot_z
from .render import render

TEXTURE_MODES = ("checker", "noise", "semantic_flat")
MAX_POINTS = 5_000_000
# (lattice spacing in meters, weight) per octave of the noise texture
NOISE_OCTAVES = ((1.5, 1.0), (0.6, 0.3))


@dataclass(frozen=True)
class RigidTransform:
    """World-frame map ``X -> rotation @ X + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points: np.ndarray) -> np.ndarray:
        # -R^T g is the fixed point offset: R (X - (-R^T g)) = R X + g
        return _apply_rt(points, self.rotation, -self.rotation.T @ self.translation)

    def apply_to_cloud(self, cloud: PointCloud) -> PointCloud:
        return PointCloud(self.apply(cloud.positions), cloud.colors)

    def apply_to_pose(self, pose: Pose) -> Pose:
        # R (X - t) = R G^T (X' - (G t + g))
        return Pose(pose.rotation @ self.rotation.T, self.rotation @ pose.translation + self.translation)


@dataclass
class SyntheticScene:
    cloud: PointCloud
    oracle_pose: Pose
    panorama: Panorama
    descriptor: dict = field(default_factory=dict)


@dataclass
class _Rect:
    """Axis-aligned rectangle: ``normal_axis`` fixed at ``offset``."""

    normal_axis: int
    offset: float
    lo: tuple[float, float]
    hi: tuple[float, float]

    @property
    def in_plane(self) -> tuple[int, int]:
        return tuple(i for i in range(3) if i != self.normal_axis)

    @property
    def area(self) -> float:
        return (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])


def _sample_rect(rect: _Rect, density: float, rng: np.random.Generator) -> np.ndarray:
    a = rect.hi[0] - rect.lo[0]
    b = rect.hi[1] - rect.lo[1]
    na = max(1, int(round(a * np.sqrt(density))))
    nb = max(1, int(round(b * np.sqrt(density))))
    ia, ib = np.meshgrid(np.arange(na), np.arange(nb), indexing="ij")
    u = (ia.ravel() + rng.random(ia.size)) / na
    v = (ib.ravel() + rng.random(ib.size)) / nb
    pts = np.empty((u.size, 3))
    i0, i1 = rect.in_plane
    pts[:, rect.normal_axis] = rect.offset
    pts[:, i0] = rect.lo[0] + u * a
    pts[:, i1] = rect.lo[1] + v * b
    return pts


def _room_rects(extent: np.ndarray) -> list[_Rect]:
    ex, ey, ez = extent
    return [
        _Rect(2, 0.0, (0.0, 0.0), (ex, ey)),
        _Rect(2, ez, (0.0, 0.0), (ex, ey)),
        _Rect(0, 0.0, (0.0, 0.0), (ey, ez)),
        _Rect(0, ex, (0.0, 0.0), (ey, ez)),
        _Rect(1, 0.0, (0.0, 0.0), (ex, ez)),
        _Rect(1, ey, (0.0, 0.0), (ex, ez)),
    ]


def _box_rects(lo: np.ndarray, hi: np.ndarray, extent: np.ndarray) -> list[_Rect]:
    """Top and side faces of a box standing on the floor, minus faces against a wall."""
    rects = [_Rect(2, hi[2], (lo[0], lo[1]), (hi[0], hi[1]))]
    if lo[0] > 0.0:
        rects.append(_Rect(0, lo[0], (lo[1], lo[2]), (hi[1], hi[2])))
    if hi[0] < extent[0]:
        rects.append(_Rect(0, hi[0], (lo[1], lo[2]), (hi[1], hi[2])))
    if lo[1] > 0.0:
        rects.append(_Rect(1, lo[1], (lo[0], lo[2]), (hi[0], hi[2])))
    if hi[1] < extent[1]:
        rects.append(_Rect(1, hi[1], (lo[0], lo[2]), (hi[0], hi[2])))
    return rects


def _place_box(extent: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """A piece of furniture pushed against a random wall."""
    size = np.array([rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.9)])
    size[:2] = np.minimum(size[:2], extent[:2] / 3)
    size[2] = min(size[2], extent[2] / 2)
    lo = np.zeros(3)
    lo[:2] = rng.random(2) * (extent[:2] - size[:2])
    wall = int(rng.integers(0, 4))
    axis = wall % 2
    lo[axis] = 0.0 if wall < 2 else extent[axis] - size[axis]
    return lo, lo + size


def _value_noise(points: np.ndarray, extent: np.ndarray, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Smooth RGB noise: two octaves of cubic-spline interpolated random lattices."""
    colors = np.zeros((points.shape[0], 3))
    for spacing, weight in NOISE_OCTAVES:
        spacing = spacing * scale
        shape = tuple(int(np.ceil(e / spacing)) + 4 for e in extent)
        coords = (points / spacing + 1.5).T
        for k in range(3):
            lattice = rng.random(shape)
            colors[:, k] += weight * map_coordinates(lattice, coords, order=3, mode="nearest")
    lo = np.percentile(colors, 1, axis=0)
    hi = np.percentile(colors, 99, axis=0)
    return np.clip((colors - lo) / (hi - lo), 0.0, 1.0)


def _checker(points: np.ndarray, rect: _Rect, palette: np.ndarray, square: float) -> np.ndarray:
    i0, i1 = rect.in_plane
    parity = (np.floor(points[:, i0] / square) + np.floor(points[:, i1] / square)).astype(np.int64) % 2
    return palette[parity]


def generate_scene(
    seed: int,
    room_extent=(4.0, 3.0, 2.5),
    points_per_m2: float = 500.0,
    texture_mode: str = "noise",
    gravity_aligned: bool = False,
    height: int = 128,
    width: int = 256,
    splat_radius_px: int = 1,
    checker_square: float = 0.4,
    noise_scale: float = 1.0,
) -> SyntheticScene:
    """Build a random furnished room and its panorama at a random interior pose.

    ``gravity_aligned`` restricts the camera rotation to a yaw about +z.
    ``noise_scale`` stretches the noise texture (larger is smoother).
    Everything is a deterministic function of the arguments.
    """
    extent = np.asarray(room_extent, dtype=np.float64)
    if extent.shape != (3,) or np.any(extent < 1.0):
        raise ValueError("room extents must all be >= 1 m")
    if points_per_m2 <= 0 or noise_scale <= 0:
        raise ValueError("density and noise scale must be positive")
    if texture_mode not in TEXTURE_MODES:
        raise ValueError(f"texture_mode must be one of {TEXTURE_MODES}")
    rng = np.random.default_rng(seed)

    boxes = [_place_box(extent, rng) for _ in range(int(rng.integers(2, 6)))]

    surfaces = [[r] for r in _room_rects(extent)] + [_box_rects(lo, hi, extent) for lo, hi in boxes]
    total_area = sum(r.area for s in surfaces for r in s)
    if total_area * points_per_m2 > MAX_POINTS:
        raise ValueError(f"density would produce more than {MAX_POINTS} points")

    palettes = rng.random((len(surfaces), 2, 3))
    flat = rng.random((len(surfaces), 3))
    positions, colors, owner = [], [], []
    for s_idx, rects in enumerate(surfaces):
        for rect in rects:
            pts = _sample_rect(rect, points_per_m2, rng)
            if texture_mode == "checker":
                col = _checker(pts, rect, palettes[s_idx], checker_square)
            else:
                col = np.broadcast_to(flat[s_idx], pts.shape)
            positions.append(pts)
            colors.append(col)
            owner.append(np.full(pts.shape[0], s_idx))
    positions = np.concatenate(positions)
    colors = np.concatenate(colors)
    owner = np.concatenate(owner)
    if texture_mode == "noise":
        colors = _value_noise(positions, extent, rng, noise_scale)

    # room surfaces lose everything a box covers or touches; box surfaces only
    # lose what lies strictly inside another box
    hidden = np.zeros(positions.shape[0], dtype=bool)
    is_room = owner < 6
    for b_idx, (lo, hi) in enumerate(boxes):
        closed = np.all((positions >= lo - 1e-9) & (positions <= hi + 1e-9), axis=1)
        strict = np.all((positions > lo + 1e-9) & (positions < hi - 1e-9), axis=1)
        hidden |= (closed & is_room) | (strict & (owner != 6 + b_idx))
    cloud = PointCloud(positions[~hidden], colors[~hidden])

    t = _free_position(extent, boxes, rng)
    R = rot_z(rng.uniform(0.0, 2 * np.pi)) if gravity_aligned else random_rotation(rng)
    pose = Pose(R, t)
    pano = render(cloud, pose, height, width, splat_radius_px).image
    descriptor = {
        "seed": int(seed),
        "room_extent": [float(e) for e in extent],
        "points_per_m2": float(points_per_m2),
        "texture_mode": texture_mode,
        "gravity_aligned": bool(gravity_aligned),
        "height": int(height),
        "width": int(width),
        "splat_radius_px": int(splat_radius_px),
        "checker_square": float(checker_square),
        "noise_scale": float(noise_scale),
        "boxes": [[[float(v) for v in lo], [float(v) for v in hi]] for lo, hi in boxes],
        "point_count": int(cloud.count),
    }
    return SyntheticScene(cloud, pose, pano, descriptor)


def _free_position(extent: np.ndarray, boxes, rng: np.random.Generator, wall_margin: float = 0.6, box_margin: float = 0.3) -> np.ndarray:
    lo = np.array([wall_margin, wall_margin, 0.8])
    hi = extent - np.array([wall_margin, wall_margin, 0.5])
    while True:
        t = lo + rng.random(3) * (hi - lo)
        if not any(np.all((t > b_lo - box_margin) & (t < b_hi + box_margin)) for b_lo, b_hi in boxes):
            return t


def augment_pose(cloud: PointCloud, seed: int) -> tuple[PointCloud, RigidTransform]:
    """Rotate the cloud about z by U(0, pi) and shift it by U(0, 3) m per axis.

    Returns the moved cloud and the transform; map ground-truth poses into
    the new frame with :meth:`RigidTransform.apply_to_pose`.
    """
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, np.pi)
    shift = rng.uniform(0.0, 3.0, size=3)
    transform = RigidTransform(rot_z(theta), shift)
    return transform.apply_to_cloud(cloud), transform
