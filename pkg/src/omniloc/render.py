"""Z-buffered equirectangular point splatting and the photometric baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .geometry import LocalPoseParam, Panorama, PointCloud, Pose, project_equirect, rot_z, transform_points
from .optimizer import DEFAULT_ALPHA, RefinementTrace, run_adam


@dataclass
class RenderOutput:
    image: Panorama
    valid_mask: np.ndarray
    depth: np.ndarray


def render(cloud: PointCloud, pose: Pose, H: int, W: int, splat_radius_px: int = 1) -> RenderOutput:
    """Splat every point into an H x W panorama, nearest point wins per pixel.

    Each point covers the pixels whose centres lie within ``splat_radius_px``
    (Chebyshev) of its projected coordinate; radius 0 means the nearest pixel
    only.  Columns wrap, rows outside the image are dropped.  Depth ties
    resolve to the lower point index.
    """
    if splat_radius_px < 0:
        raise ValueError("splat_radius_px must be >= 0")
    x = transform_points(cloud, pose)
    coords, valid = project_equirect(x, H, W)
    idx = np.flatnonzero(valid)
    depth = np.sqrt(np.sum(x[idx] ** 2, axis=1))
    rgb, zbuf = _kernels.splat(
        np.ascontiguousarray(coords[idx, 0]),
        np.ascontiguousarray(coords[idx, 1]),
        depth,
        np.ascontiguousarray(cloud.colors[idx]),
        H,
        W,
        int(splat_radius_px),
    )
    return RenderOutput(Panorama(rgb), np.isfinite(zbuf), zbuf)


def render_reference(cloud: PointCloud, pose: Pose, H: int, W: int, splat_radius_px: int = 1) -> RenderOutput:
    """Vectorised two-pass (depth, then color) version of :func:`render`; same output."""
    if splat_radius_px < 0:
        raise ValueError("splat_radius_px must be >= 0")
    x = transform_points(cloud, pose)
    coords, valid = project_equirect(x, H, W)
    idx = np.flatnonzero(valid)
    depth = np.sqrt(np.sum(x[idx] ** 2, axis=1))
    row, col = coords[idx, 0], coords[idx, 1]
    if splat_radius_px == 0:
        rows = np.minimum(np.floor(row + 0.5), H - 1).astype(np.int64)
        cols = np.floor(col + 0.5).astype(np.int64)
        owner = np.arange(idx.size)
    else:
        span = np.arange(-splat_radius_px, splat_radius_px + 2)
        dr, dc = np.meshgrid(span, span, indexing="ij")
        rows = np.floor(row)[:, None] + dr.ravel()[None, :]
        cols = np.floor(col)[:, None] + dc.ravel()[None, :]
        near = (np.abs(rows - row[:, None]) <= splat_radius_px) & (np.abs(cols - col[:, None]) <= splat_radius_px)
        owner = np.broadcast_to(np.arange(idx.size)[:, None], near.shape)[near]
        rows = rows[near].astype(np.int64)
        cols = cols[near].astype(np.int64)
    cols = np.mod(cols, W)
    inside = (rows >= 0) & (rows < H)
    pix = rows[inside] * W + cols[inside]
    owner = owner[inside]

    # depth pass: per pixel, the smallest (depth, point index)
    order = np.lexsort((idx[owner], depth[owner], pix))
    pix_sorted = pix[order]
    first = np.ones(pix_sorted.size, dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    win_pix = pix_sorted[first]
    win_pt = owner[order][first]

    # color pass
    rgb = np.zeros((H * W, 3))
    zbuf = np.full(H * W, np.inf)
    rgb[win_pix] = cloud.colors[idx[win_pt]]
    zbuf[win_pix] = depth[win_pt]
    mask = np.isfinite(zbuf).reshape(H, W)
    return RenderOutput(Panorama(rgb.reshape(H, W, 3)), mask, zbuf.reshape(H, W))


def photometric_loss(cloud: PointCloud, image: Panorama, pose: Pose, splat_radius_px: int = 1) -> float:
    """Mean RGB distance between the render at ``pose`` and ``image`` over rendered pixels."""
    out = render(cloud, pose, image.height, image.width, splat_radius_px)
    if not out.valid_mask.any():
        return float("inf")
    diff = out.image.pixels[out.valid_mask] - image.pixels[out.valid_mask]
    return float(np.mean(np.sqrt(np.sum(diff * diff, axis=1))))


def photometric_loss_grad(
    cloud: PointCloud,
    image: Panorama,
    param: LocalPoseParam,
    splat_radius_px: int = 1,
    step: float = 1e-2,
) -> tuple[float, np.ndarray]:
    """Photometric loss and its central finite-difference gradient in ``(omega, tau)``.

    Splatting makes the loss piecewise constant in the pose, so ``step`` is a
    deliberately coarse probe (radians / meters), not an infinitesimal.
    """

    def value(p: np.ndarray) -> float:
        q = param.with_vector(p)
        return photometric_loss(cloud, image, Pose(q.rotation, q.tau), splat_radius_px)

    p0 = param.vector()
    loss = value(p0)
    grad = np.zeros(6)
    for k in range(6):
        e = np.zeros(6)
        e[k] = step
        hi, lo = value(p0 + e), value(p0 - e)
        if np.isfinite(hi) and np.isfinite(lo):
            grad[k] = (hi - lo) / (2 * step)
    return loss, grad


def refine_photometric(
    cloud: PointCloud,
    image: Panorama,
    start: Pose,
    n_iter: int,
    alpha0: float = DEFAULT_ALPHA,
    gravity_known: bool = False,
    splat_radius_px: int = 1,
    step: float = 1e-2,
) -> RefinementTrace:
    """Same scheduled Adam loop as the sampling refinement, driven by the photometric loss."""
    return run_adam(
        lambda p: photometric_loss_grad(cloud, image, p, splat_radius_px, step),
        LocalPoseParam.at(start),
        n_iter,
        alpha0,
        gravity_known,
    )


def flip_panorama(image: Panorama) -> Panorama:
    """Raw 180-degree image rotation (rows and columns reversed).

    This is what an upside-down camera records.  Up to a one-pixel offset it
    corresponds to the camera-frame rotation ``diag(1, -1, -1)``, see
    :data:`FLIP_ROTATION`.
    """
    return Panorama(image.pixels[::-1, ::-1])


FLIP_ROTATION = np.diag([1.0, -1.0, -1.0])


def flipped_pose(pose: Pose, width: int | None = None) -> Pose:
    """Pose at which :func:`flip_panorama` of a view at ``pose`` is (nearly) seen.

    Passing the panorama ``width`` also absorbs the one-column shift of the
    flip as a yaw; the one-row shift has no rigid equivalent and remains.
    """
    R = FLIP_ROTATION @ pose.rotation
    if width is not None:
        R = rot_z(-2.0 * np.pi / width) @ R
    return Pose(R, pose.translation)
