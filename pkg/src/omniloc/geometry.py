"""Point cloud / panorama / pose types, equirectangular projection and SO(3) helpers.

Conventions used throughout the package:

* A pose ``(R, t)`` maps world points into the camera frame as ``R @ (X - t)``,
  so ``t`` is the camera centre in world coordinates.
* Image coordinates are ``(row, col)`` with pixel centres at integers.  The
  north pole (+z) sits on row 0, the south pole on row ``H``; azimuth -pi is
  column 0 and the column axis wraps with period ``W``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RADIUS_EPS = 1e-8
_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class PointCloud:
    """Colored point cloud. ``positions`` in meters, ``colors`` RGB in [0, 1]."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        col = np.ascontiguousarray(self.colors, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be N x 3, got {pos.shape}")
        if col.shape != pos.shape:
            raise ValueError(f"colors shape {col.shape} does not match positions {pos.shape}")
        if pos.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        if not (np.all(np.isfinite(col)) and col.min() >= 0.0 and col.max() <= 1.0):
            raise ValueError("colors must lie in [0, 1]")
        pos.setflags(write=False)
        col.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.positions.min(axis=0), self.positions.max(axis=0)

    def subset(self, index) -> "PointCloud":
        return PointCloud(self.positions[index], self.colors[index])


@dataclass(frozen=True)
class Panorama:
    """Equirectangular RGB image, ``pixels`` is H x W x 3 in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be H x W x 3, got {px.shape}")
        if px.shape[0] < 2 or px.shape[1] < 2:
            raise ValueError("panorama must be at least 2 x 2")
        if not (np.all(np.isfinite(px)) and px.min() >= 0.0 and px.max() <= 1.0):
            raise ValueError("pixel values must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _check_rotation(R: np.ndarray) -> None:
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("rotation must be a finite 3 x 3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() >= _ORTHO_TOL:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
        raise ValueError("rotation must have determinant +1")


@dataclass(frozen=True)
class Pose:
    """Camera pose: world point X maps to ``rotation @ (X - translation)``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        _check_rotation(R)
        if t.shape != (3,) or not np.all(np.isfinite(t)):
            raise ValueError("translation must be a finite 3-vector")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class LocalPoseParam:
    """Optimisation parametrisation ``R = exp([omega]x) @ base_rotation``, ``t = tau``."""

    omega: np.ndarray
    tau: np.ndarray
    base_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    @classmethod
    def at(cls, pose: Pose) -> "LocalPoseParam":
        return cls(np.zeros(3), pose.translation.copy(), pose.rotation.copy())

    @property
    def rotation(self) -> np.ndarray:
        return exp_so3(self.omega) @ self.base_rotation

    def vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.tau])

    def with_vector(self, p: np.ndarray) -> "LocalPoseParam":
        p = np.asarray(p, dtype=np.float64)
        return LocalPoseParam(p[:3].copy(), p[3:].copy(), self.base_rotation)

    def to_pose(self) -> Pose:
        return Pose(orthonormalize(self.rotation), self.tau)


def transform_points(cloud_or_points, pose: Pose) -> np.ndarray:
    """Return ``R (X - t)`` for every row of the cloud.

    Written out per component so the result does not depend on the BLAS
    backend or its thread count.
    """
    X = cloud_or_points.positions if isinstance(cloud_or_points, PointCloud) else cloud_or_points
    return _apply_rt(X, pose.rotation, pose.translation)


def _apply_rt(X: np.ndarray, R: np.ndarray, t: np.ndarray) -> np.ndarray:
    d0 = X[:, 0] - t[0]
    d1 = X[:, 1] - t[1]
    d2 = X[:, 2] - t[2]
    out = np.empty((X.shape[0], 3))
    for k in range(3):
        out[:, k] = R[k, 0] * d0 + R[k, 1] * d1 + R[k, 2] * d2
    return out


def project_equirect(points: np.ndarray, H: int, W: int) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points to equirectangular ``(row, col)``.

    Returns the N x 2 coordinates and a validity mask.  Points within
    ``RADIUS_EPS`` of the camera centre are invalid and get NaN coordinates.
    """
    if H < 2 or W < 2:
        raise ValueError("H and W must be at least 2")
    x1, x2, x3 = points[:, 0], points[:, 1], points[:, 2]
    rho = np.hypot(x1, x2)
    radius = np.hypot(rho, x3)
    valid = radius >= RADIUS_EPS
    elev = np.arctan2(x3, rho)
    azim = np.arctan2(x2, x1)
    coords = np.empty((points.shape[0], 2))
    coords[:, 0] = H * (np.pi / 2 - elev) / np.pi
    col = W * (azim + np.pi) / (2 * np.pi)
    # azimuth +pi lands exactly on W
    col[col >= W] -= W
    coords[:, 1] = col
    coords[~valid] = np.nan
    return coords, valid


def unproject_equirect(coords: np.ndarray, H: int, W: int) -> np.ndarray:
    """Unit viewing directions for ``(row, col)`` image coordinates."""
    coords = np.atleast_2d(coords)
    elev = np.pi / 2 - np.pi * coords[:, 0] / H
    azim = 2 * np.pi * coords[:, 1] / W - np.pi
    c = np.cos(elev)
    return np.stack([c * np.cos(azim), c * np.sin(azim), np.sin(elev)], axis=1)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _so3_coefficients(theta: float) -> tuple[float, float, float]:
    # A = sin/th, B = (1-cos)/th^2, C = (th-sin)/th^3
    if theta < 1e-8:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0
    s, c = np.sin(theta), np.cos(theta)
    return s / theta, (1.0 - c) / theta**2, (theta - s) / theta**3


def exp_so3(omega) -> np.ndarray:
    """Rodrigues exponential map of an axis-angle vector."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = float(np.sqrt(omega @ omega))
    A, B, _ = _so3_coefficients(theta)
    K = skew(omega)
    return np.eye(3) + A * K + B * (K @ K)


def left_jacobian_so3(omega) -> np.ndarray:
    """``J_l`` with ``exp((w + d)^) ~= exp((J_l d)^) exp(w^)`` to first order."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = float(np.sqrt(omega @ omega))
    _, B, C = _so3_coefficients(theta)
    K = skew(omega)
    return np.eye(3) + B * K + C * (K @ K)


def log_so3(R: np.ndarray) -> np.ndarray:
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(cos))
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-8:
        return 0.5 * w
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; read the axis off R + I
        M = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(M)))
        axis = M[:, k] / np.sqrt(M[k, k])
        return theta * axis / np.linalg.norm(axis)
    return theta / (2.0 * np.sin(theta)) * w


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (SVD projection)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.linalg.det(U @ Vt)])
    return U @ D @ Vt


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(R: np.ndarray) -> float:
    """Angle of a rotation matrix, radians in [0, pi]."""
    return float(np.arccos(np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)))


def quaternion_to_matrix(q) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` to rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


# irrational step for the second angle of the spiral (root of x^4 = x + 4)
_SPIRAL_PSI = 1.533751168755204288118041


def _spiral_quaternions(n: int) -> np.ndarray:
    """Super-Fibonacci spiral: ``n`` evenly spread unit quaternions."""
    s = np.arange(n) + 0.5
    r, rr = np.sqrt(s / n), np.sqrt(1.0 - s / n)
    a = 2.0 * np.pi * s / np.sqrt(2.0)
    b = 2.0 * np.pi * s / _SPIRAL_PSI
    return np.stack([r * np.sin(a), r * np.cos(a), rr * np.sin(b), rr * np.cos(b)], axis=1)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """One uniform random rotation (Shoemake's quaternion method)."""
    u = rng.random(3)
    a, b = np.sqrt(1.0 - u[0]), np.sqrt(u[0])
    q = [b * np.cos(2 * np.pi * u[2]), a * np.sin(2 * np.pi * u[1]), a * np.cos(2 * np.pi * u[1]), b * np.sin(2 * np.pi * u[2])]
    return quaternion_to_matrix(q)


def sample_rotations(n: int, gravity_known: bool, seed: int = 0) -> list[np.ndarray]:
    """Candidate rotations.

    With a known gravity direction these are ``n`` evenly spaced yaws about +z.
    Otherwise a super-Fibonacci spiral of ``n`` rotations, turned as a whole
    by a uniform random rotation drawn from a generator seeded with ``seed``.
    The set is uniform in distribution but far more evenly spread than
    independent draws, so the largest gap to any rotation stays small.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if gravity_known:
        return [rot_z(2.0 * np.pi * k / n) for k in range(n)]
    G = random_rotation(np.random.default_rng(seed))
    return [G @ quaternion_to_matrix(q) for q in _spiral_quaternions(n)]


def grid_counts(extent: np.ndarray, n: int, degenerate: float = 1e-6) -> tuple[int, int, int]:
    """Per-axis grid counts roughly proportional to ``extent`` with product <= n.

    Greedy refinement: repeatedly split the axis with the largest cell size
    (ties go to the longer axis, then the lower axis index) as long as the
    total count stays within ``n``.  Degenerate axes keep a single cell.
    """
    extent = np.asarray(extent, dtype=np.float64)
    counts = [1, 1, 1]
    active = [i for i in range(3) if extent[i] >= degenerate]
    while True:
        order = sorted(active, key=lambda i: (-extent[i] / counts[i], -extent[i], i))
        for i in order:
            trial = counts.copy()
            trial[i] += 1
            if trial[0] * trial[1] * trial[2] <= n:
                counts = trial
                break
        else:
            return tuple(counts)


def sample_translations(bbox_min, bbox_max, n: int) -> list[np.ndarray]:
    """Cell-centred regular grid over a box, lexicographic (x-major) order."""
    if n < 1:
        raise ValueError("n must be >= 1")
    lo = np.asarray(bbox_min, dtype=np.float64)
    hi = np.asarray(bbox_max, dtype=np.float64)
    if np.any(hi < lo):
        raise ValueError("bbox_max must not be below bbox_min")
    extent = hi - lo
    counts = grid_counts(extent, n)
    axes = [lo[i] + extent[i] * (np.arange(counts[i]) + 0.5) / counts[i] for i in range(3)]
    return [np.array([x, y, z]) for x in axes[0] for y in axes[1] for z in axes[2]]
