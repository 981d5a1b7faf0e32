"""Fused per-point kernels for the sampling loss.

One pass per call: transform, project, bilinear gather, residual, and (for
the gradient) the chain rule down to camera-frame point derivatives.  Sums
run sequentially in point order so results do not depend on threading.
"""

import math

import numba
import numpy as np

_JIT = dict(nogil=True, cache=True, fastmath=False)
_HALF_PI = 0.5 * math.pi
_TWO_PI = 2.0 * math.pi
_RADIUS_EPS = 1e-8


@numba.njit(**_JIT)
def _project(x0, x1, x2, H, W):
    rho = math.sqrt(x0 * x0 + x1 * x1)
    elev = math.atan2(x2, rho)
    azim = math.atan2(x1, x0)
    row = H * (_HALF_PI - elev) / math.pi
    col = W * (azim + math.pi) / _TWO_PI
    if col >= W:
        col -= W
    return row, col, rho


@numba.njit(**_JIT)
def _corners(row, col, H, W):
    r0f = math.floor(row)
    c0f = math.floor(col)
    a = row - r0f
    b = col - c0f
    r0 = min(max(int(r0f), 0), H - 1)
    r1 = min(max(int(r0f) + 1, 0), H - 1)
    c0 = int(c0f) % W
    c1 = (c0 + 1) % W
    return r0, r1, c0, c1, a, b


@numba.njit(**_JIT)
def loss(X, C, pixels, R, t):
    H, W = pixels.shape[0], pixels.shape[1]
    total = 0.0
    n_valid = 0
    for i in range(X.shape[0]):
        d0 = X[i, 0] - t[0]
        d1 = X[i, 1] - t[1]
        d2 = X[i, 2] - t[2]
        x0 = R[0, 0] * d0 + R[0, 1] * d1 + R[0, 2] * d2
        x1 = R[1, 0] * d0 + R[1, 1] * d1 + R[1, 2] * d2
        x2 = R[2, 0] * d0 + R[2, 1] * d1 + R[2, 2] * d2
        if math.sqrt(x0 * x0 + x1 * x1 + x2 * x2) < _RADIUS_EPS:
            continue
        row, col, _ = _project(x0, x1, x2, H, W)
        r0, r1, c0, c1, a, b = _corners(row, col, H, W)
        sq = 0.0
        for k in range(3):
            p00 = pixels[r0, c0, k]
            p01 = pixels[r0, c1, k]
            p10 = pixels[r1, c0, k]
            p11 = pixels[r1, c1, k]
            top = p00 + b * (p01 - p00)
            bottom = p10 + b * (p11 - p10)
            diff = top + a * (bottom - top) - C[i, k]
            sq += diff * diff
        total += math.sqrt(sq)
        n_valid += 1
    if n_valid == 0:
        return math.inf, 0
    return total / n_valid, n_valid


@numba.njit(**_JIT)
def loss_many(X, C, pixels, Rs, ts):
    out = np.empty(Rs.shape[0])
    for j in range(Rs.shape[0]):
        out[j] = loss(X, C, pixels, Rs[j], ts[j])[0]
    return out


@numba.njit(**_JIT)
def loss_grad(X, C, pixels, R, t, delta):
    """Loss, valid count, sum of dL/dx and sum of x cross dL/dx (both unnormalised)."""
    H, W = pixels.shape[0], pixels.shape[1]
    k_row = -H / math.pi
    k_col = W / _TWO_PI
    delta2 = delta * delta
    total = 0.0
    n_valid = 0
    gx = np.zeros(3)
    gc = np.zeros(3)
    diff = np.empty(3)
    jr = np.empty(3)
    jc = np.empty(3)
    for i in range(X.shape[0]):
        d0 = X[i, 0] - t[0]
        d1 = X[i, 1] - t[1]
        d2 = X[i, 2] - t[2]
        x0 = R[0, 0] * d0 + R[0, 1] * d1 + R[0, 2] * d2
        x1 = R[1, 0] * d0 + R[1, 1] * d1 + R[1, 2] * d2
        x2 = R[2, 0] * d0 + R[2, 1] * d1 + R[2, 2] * d2
        if math.sqrt(x0 * x0 + x1 * x1 + x2 * x2) < _RADIUS_EPS:
            continue
        row, col, rho = _project(x0, x1, x2, H, W)
        r0, r1, c0, c1, a, b = _corners(row, col, H, W)
        sq = 0.0
        for k in range(3):
            p00 = pixels[r0, c0, k]
            p01 = pixels[r0, c1, k]
            p10 = pixels[r1, c0, k]
            p11 = pixels[r1, c1, k]
            top = p00 + b * (p01 - p00)
            bottom = p10 + b * (p11 - p10)
            diff[k] = top + a * (bottom - top) - C[i, k]
            jr[k] = bottom - top
            jc[k] = (1.0 - a) * (p01 - p00) + a * (p11 - p10)
            sq += diff[k] * diff[k]
        total += math.sqrt(sq)
        n_valid += 1
        if rho < _RADIUS_EPS:
            continue
        inv = 1.0 / math.sqrt(sq + delta2)
        g_row = 0.0
        g_col = 0.0
        for k in range(3):
            g_row += diff[k] * inv * jr[k]
            g_col += diff[k] * inv * jc[k]
        r2 = rho * rho + x2 * x2
        f_row = g_row * k_row / r2
        f_col = g_col * k_col / (rho * rho)
        # d row / dx = k_row * (-x2 x0 / (rho r2), -x2 x1 / (rho r2), rho / r2)
        # d col / dx = k_col * (-x1 / rho^2, x0 / rho^2, 0)
        e0 = f_row * (-x2 * x0 / rho) - f_col * x1
        e1 = f_row * (-x2 * x1 / rho) + f_col * x0
        e2 = f_row * rho
        gx[0] += e0
        gx[1] += e1
        gx[2] += e2
        gc[0] += x1 * e2 - x2 * e1
        gc[1] += x2 * e0 - x0 * e2
        gc[2] += x0 * e1 - x1 * e0
    if n_valid == 0:
        return math.inf, 0, gx, gc
    return total / n_valid, n_valid, gx, gc


@numba.njit(**_JIT)
def splat(rows, cols, depth, colors, H, W, radius):
    """Sequential z-buffer: per pixel the smallest (depth, point order) wins."""
    zbuf = np.full((H, W), np.inf)
    owner = np.full((H, W), -1, dtype=np.int64)
    for i in range(rows.shape[0]):
        row = rows[i]
        col = cols[i]
        d = depth[i]
        if radius == 0:
            r = min(int(math.floor(row + 0.5)), H - 1)
            c = int(math.floor(col + 0.5)) % W
            if r >= 0 and d < zbuf[r, c]:
                zbuf[r, c] = d
                owner[r, c] = i
            continue
        r0 = int(math.floor(row))
        c0 = int(math.floor(col))
        for r in range(r0 - radius, r0 + radius + 2):
            if r < 0 or r >= H or abs(r - row) > radius:
                continue
            for c in range(c0 - radius, c0 + radius + 2):
                if abs(c - col) > radius:
                    continue
                cw = c % W
                if d < zbuf[r, cw]:
                    zbuf[r, cw] = d
                    owner[r, cw] = i
    rgb = np.zeros((H, W, 3))
    for r in range(H):
        for c in range(W):
            i = owner[r, c]
            if i >= 0:
                for k in range(3):
                    rgb[r, c, k] = colors[i, k]
    return rgb, zbuf
