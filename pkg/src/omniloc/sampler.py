"""Wrap-aware bilinear sampling and the point-centric sampling loss.

The loss of a pose is the mean, over points that project validly, of the
Euclidean RGB distance between each point's color and the image color
bilinearly sampled at its projection.  Occlusion is deliberately ignored.

Two evaluation routes exist: the composable numpy functions
(:func:`bilinear_sample` on top of :func:`~omniloc.geometry.project_equirect`)
and the fused per-point kernels in :mod:`omniloc._kernels`, which
:func:`sampling_loss` and :func:`sampling_loss_grad` use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .geometry import (
    LocalPoseParam,
    Panorama,
    PointCloud,
    Pose,
    _apply_rt,
    left_jacobian_so3,
    project_equirect,
    transform_points,
)

SMOOTH_DELTA = 1e-8


@dataclass
class SampleResult:
    values: np.ndarray
    valid_mask: np.ndarray
    jacobians: Optional[np.ndarray] = None  # N x 3 x 2, d color / d (row, col)


@dataclass
class LossGradient:
    loss: float
    d_omega: np.ndarray
    d_tau: np.ndarray
    n_valid: int

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.d_omega, self.d_tau])


def bilinear_sample(image: Panorama, coords: np.ndarray, with_jacobian: bool = False) -> SampleResult:
    """Bilinearly sample ``image`` at ``(row, col)`` coordinates.

    Column neighbours wrap modulo W, row neighbours clamp to ``[0, H-1]``.
    NaN coordinates yield ``valid_mask = False`` and zero values.
    """
    px = image.pixels
    H, W = px.shape[:2]
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    valid = np.all(np.isfinite(coords), axis=1)
    row = np.where(valid, coords[:, 0], 0.0)
    col = np.where(valid, coords[:, 1], 0.0)

    r0f = np.floor(row)
    c0f = np.floor(col)
    a = (row - r0f)[:, None]
    b = (col - c0f)[:, None]
    r0 = np.clip(r0f.astype(np.int64), 0, H - 1)
    r1 = np.clip(r0f.astype(np.int64) + 1, 0, H - 1)
    c0 = np.mod(c0f.astype(np.int64), W)
    c1 = np.mod(c0 + 1, W)

    p00, p01 = px[r0, c0], px[r0, c1]
    p10, p11 = px[r1, c0], px[r1, c1]
    top = p00 + b * (p01 - p00)
    bottom = p10 + b * (p11 - p10)
    values = top + a * (bottom - top)
    values[~valid] = 0.0

    jac = None
    if with_jacobian:
        jac = np.empty((coords.shape[0], 3, 2))
        jac[:, :, 0] = bottom - top
        jac[:, :, 1] = (1.0 - a) * (p01 - p00) + a * (p11 - p10)
        jac[~valid] = 0.0
    return SampleResult(values=values, valid_mask=valid, jacobians=jac)


def sampled_colors(cloud: PointCloud, image: Panorama, pose: Pose) -> SampleResult:
    """Image colors seen by every point of ``cloud`` under ``pose``."""
    coords, _ = project_equirect(transform_points(cloud, pose), image.height, image.width)
    return bilinear_sample(image, coords)


def sampling_loss(cloud: PointCloud, image: Panorama, pose: Pose) -> float:
    """Mean per-point RGB distance; ``inf`` when no point projects validly."""
    loss, n_valid = _kernels.loss(
        cloud.positions, cloud.colors, image.pixels, pose.rotation, pose.translation
    )
    return loss if n_valid > 0 else float("inf")


def sampling_loss_reference(cloud: PointCloud, image: Panorama, pose: Pose) -> float:
    """Same quantity as :func:`sampling_loss`, composed from the numpy pieces."""
    res = sampled_colors(cloud, image, pose)
    if not res.valid_mask.any():
        return float("inf")
    diff = res.values[res.valid_mask] - cloud.colors[res.valid_mask]
    return float(np.mean(np.sqrt(np.sum(diff * diff, axis=1))))


def sampling_loss_grad(cloud: PointCloud, image: Panorama, param: LocalPoseParam) -> LossGradient:
    """Loss and its exact gradient with respect to ``(omega, tau)``."""
    R = param.rotation
    loss, n_valid, g_x, g_cross = _kernels.loss_grad(
        cloud.positions, cloud.colors, image.pixels, R, np.asarray(param.tau, dtype=np.float64), SMOOTH_DELTA
    )
    if n_valid == 0:
        return LossGradient(float("inf"), np.zeros(3), np.zeros(3), 0)
    # x = exp(w^) R0 (X - tau):  dx/dtau = -R,  dx/dw = -[x]_x J_l(w)
    d_tau = -(R.T @ g_x) / n_valid
    d_omega = left_jacobian_so3(param.omega).T @ g_cross / n_valid
    return LossGradient(loss, d_omega, d_tau, n_valid)


def sampling_loss_grad_reference(cloud: PointCloud, image: Panorama, param: LocalPoseParam) -> LossGradient:
    """Numpy chain-rule gradient, kept as a cross-check of the fused kernel."""
    R = param.rotation
    H, W = image.height, image.width
    x = _apply_rt(cloud.positions, R, np.asarray(param.tau, dtype=np.float64))
    coords, valid = project_equirect(x, H, W)
    res = bilinear_sample(image, coords, with_jacobian=True)
    n_valid = int(valid.sum())
    if n_valid == 0:
        return LossGradient(float("inf"), np.zeros(3), np.zeros(3), 0)
    diff = res.values - cloud.colors
    sq = np.sum(diff * diff, axis=1)
    loss = float(np.mean(np.sqrt(sq[valid])))
    g = diff / np.sqrt(sq + SMOOTH_DELTA**2)[:, None]
    g_rc = np.einsum("nc,nck->nk", g, res.jacobians)

    x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
    rho2 = x1 * x1 + x2 * x2
    rho = np.sqrt(rho2)
    r2 = rho2 + x3 * x3
    ok = valid & (rho >= 1e-8)
    rho_s = np.where(ok, rho, 1.0)
    rho2_s = np.where(ok, rho2, 1.0)
    r2_s = np.where(ok, r2, 1.0)
    k_row = -H / np.pi
    k_col = W / (2 * np.pi)
    d_row = k_row * np.stack([-x3 * x1 / (rho_s * r2_s), -x3 * x2 / (rho_s * r2_s), rho_s / r2_s], axis=1)
    d_col = k_col * np.stack([-x2 / rho2_s, x1 / rho2_s, np.zeros_like(x1)], axis=1)
    gx = g_rc[:, :1] * d_row + g_rc[:, 1:] * d_col
    gx[~ok] = 0.0

    d_tau = -(R.T @ gx.sum(axis=0)) / n_valid
    d_omega = left_jacobian_so3(param.omega).T @ np.cross(x, gx).sum(axis=0) / n_valid
    return LossGradient(loss, d_omega, d_tau, n_valid)
