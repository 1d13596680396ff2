"""
Software rasterizer (z-buffer, flat Lambertian shading), keypoint heatmaps and
heatmap peak extraction.

Pixel (i, j) -- row i, column j -- samples the continuous image point
(u, v) = (j + 0.5, i + 0.5). The rasterizer, the heatmaps and extract_peak all
use this convention.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .camera import to_camera
from .errors import DomainError

DEFAULT_ALBEDO = (0.87, 0.67, 0.58)
DEFAULT_NEAR = 10.0
DEFAULT_FAR = 5000.0


@dataclass(frozen=True, eq=False)
class RenderOutput:
    rgb: np.ndarray     # (H, W, 3) uint8
    depth: np.ndarray   # (H, W) float64 mm, 0 = background
    mask: np.ndarray    # (H, W) uint8 in {0, 1}


@dataclass(frozen=True)
class Light:
    direction: tuple = (0.3, -0.4, -1.0)   # camera frame, from the surface toward the light
    intensity: float = 1.0


@dataclass(frozen=True)
class Peak:
    u: float
    v: float
    confidence: float
    found: bool


@numba.njit(cache=True)
def _raster(q, faces, H, W, fx, fy, cx, cy, near, far, depth, face_id):
    n_faces = faces.shape[0]
    for f in range(n_faces):
        a, b, c = faces[f, 0], faces[f, 1], faces[f, 2]
        za, zb, zc = q[a, 2], q[b, 2], q[c, 2]
        if za < near or zb < near or zc < near:
            continue
        if za > far and zb > far and zc > far:
            continue
        ua = fx * q[a, 0] / za + cx
        va = fy * q[a, 1] / za + cy
        ub = fx * q[b, 0] / zb + cx
        vb = fy * q[b, 1] / zb + cy
        uc = fx * q[c, 0] / zc + cx
        vc = fy * q[c, 1] / zc + cy
        area = (ub - ua) * (vc - va) - (vb - va) * (uc - ua)
        if abs(area) < 1e-12:
            continue
        j0 = max(int(np.floor(min(ua, ub, uc) - 0.5)), 0)
        j1 = min(int(np.ceil(max(ua, ub, uc) - 0.5)), W - 1)
        i0 = max(int(np.floor(min(va, vb, vc) - 0.5)), 0)
        i1 = min(int(np.ceil(max(va, vb, vc) - 0.5)), H - 1)
        inv_area = 1.0 / area
        for i in range(i0, i1 + 1):
            pv = i + 0.5
            for j in range(j0, j1 + 1):
                pu = j + 0.5
                w0 = ((ub - pu) * (vc - pv) - (vb - pv) * (uc - pu)) * inv_area
                w1 = ((uc - pu) * (va - pv) - (vc - pv) * (ua - pu)) * inv_area
                w2 = 1.0 - w0 - w1
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                z = 1.0 / (w0 / za + w1 / zb + w2 / zc)
                if z < near or z > far:
                    continue
                if z < depth[i, j]:
                    depth[i, j] = z
                    face_id[i, j] = f


def _face_shading(q, faces, light_dir):
    n = np.cross(q[faces[:, 1]] - q[faces[:, 0]], q[faces[:, 2]] - q[faces[:, 0]])
    norm = np.linalg.norm(n, axis=1)
    norm[norm == 0] = 1.0
    l = np.asarray(light_dir, dtype=float)
    l = l / np.linalg.norm(l)
    return np.maximum(0.0, (n / norm[:, None]) @ l)


def rasterize(vertices, faces, intr, extr, light=Light(), background=(0, 0, 0),
              albedo=DEFAULT_ALBEDO, near=DEFAULT_NEAR, far=DEFAULT_FAR):
    """Render a triangle mesh (world mm) into RGB, depth and mask buffers."""
    if not 0.0 <= light.intensity <= 2.0:
        raise DomainError("light intensity must lie in [0, 2]")
    if not 0 < near < far:
        raise DomainError("need 0 < near < far")
    vertices = np.asarray(vertices, dtype=float)
    faces = np.ascontiguousarray(faces, dtype=np.int64)
    H, W = intr.height, intr.width
    q = np.ascontiguousarray(to_camera(extr, vertices))
    zbuf = np.full((H, W), np.inf)
    face_id = np.full((H, W), -1, dtype=np.int64)
    _raster(q, faces, H, W, intr.fx, intr.fy, intr.cx, intr.cy, near, far, zbuf, face_id)

    mask = (face_id >= 0).astype(np.uint8)
    depth = np.where(mask == 1, zbuf, 0.0)
    rgb = np.empty((H, W, 3), dtype=np.uint8)
    rgb[:] = np.asarray(background, dtype=np.uint8)
    hit = face_id[mask == 1]
    if hit.size:
        shade = _face_shading(q, faces, light.direction)[hit] * light.intensity
        col = np.rint(255.0 * shade[:, None] * np.asarray(albedo, dtype=float))
        rgb[mask == 1] = np.clip(col, 0, 255).astype(np.uint8)
    return RenderOutput(rgb, depth, mask)


def pixel_grid(H, W):
    """Continuous (u, v) coordinates of every pixel center."""
    return np.meshgrid(np.arange(W) + 0.5, np.arange(H) + 0.5)


def render_heatmaps(keypoints2d, sigma=2.0, res=(256, 256)):
    """
    One Gaussian channel per keypoint, peak-normalized to exactly 1.
    Keypoints outside [0, W) x [0, H) give an all-zero channel.
    """
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    kp = np.asarray(keypoints2d, dtype=float)
    H, W = res
    u, v = pixel_grid(H, W)
    out = np.zeros((len(kp), H, W))
    for k, (ku, kv) in enumerate(kp):
        if not (0 <= ku < W and 0 <= kv < H):
            continue
        g = np.exp(-((u - ku) ** 2 + (v - kv) ** 2) / (2.0 * sigma ** 2))
        out[k] = g / g.max()
    return out


# least-squares fit of c0 + c1 x + c2 y + c3 x^2 + c4 xy + c5 y^2 on the 3x3 stencil
_dy, _dx = np.mgrid[-1:2, -1:2]
_FIT = np.linalg.pinv(np.stack([np.ones(9), _dx.ravel(), _dy.ravel(), _dx.ravel() ** 2,
                                (_dx * _dy).ravel(), _dy.ravel() ** 2], axis=1))


def extract_peak(channel):
    """Sub-pixel maximum of one heatmap channel, as a Peak in (u, v) pixel coordinates."""
    h = np.asarray(channel, dtype=float)
    if np.any(h < 0):
        raise DomainError("heatmap channel must be nonnegative")
    flat = int(np.argmax(h))          # first occurrence = smallest row-major index
    conf = float(h.flat[flat])
    if conf <= 0:
        return Peak(float("nan"), float("nan"), 0.0, False)
    i, j = divmod(flat, h.shape[1])
    u, v = j + 0.5, i + 0.5
    if 0 < i < h.shape[0] - 1 and 0 < j < h.shape[1] - 1:
        patch = h[i - 1:i + 2, j - 1:j + 2]
        if np.all(patch > 0):
            c = _FIT @ np.log(patch).ravel()
            A = np.array([[2 * c[3], c[4]], [c[4], 2 * c[5]]])
            # only trust a proper maximum whose offset stays inside the stencil
            if np.linalg.det(A) > 0 and A[0, 0] < 0:
                dx, dy = np.linalg.solve(A, -c[1:3])
                if abs(dx) <= 1 and abs(dy) <= 1:
                    u, v = u + dx, v + dy
    return Peak(float(u), float(v), conf, True)


def mask_vertex_consistency(vertices, intr, extr, out, tol=1.0, near=DEFAULT_NEAR):
    """
    Fraction of visible mesh vertices whose projection lies in the mask dilated
    by one pixel. A vertex is visible when it projects into the image and is no
    farther than `tol` mm behind the rendered depth there (background = infinity).
    Returns (fraction, number of visible vertices).
    """
    q = to_camera(extr, np.asarray(vertices, dtype=float))
    ok = q[:, 2] >= near
    u = intr.fx * q[ok, 0] / q[ok, 2] + intr.cx
    v = intr.fy * q[ok, 1] / q[ok, 2] + intr.cy
    z = q[ok, 2]
    H, W = out.mask.shape
    j = np.floor(u).astype(int)
    i = np.floor(v).astype(int)
    inside = (i >= 0) & (i < H) & (j >= 0) & (j < W)
    i, j, z = i[inside], j[inside], z[inside]
    zb = np.where(out.mask[i, j] == 1, out.depth[i, j], np.inf)
    visible = z <= zb + tol
    if not visible.any():
        return 1.0, 0
    padded = np.pad(out.mask, 1)
    dil = np.zeros_like(out.mask)
    for di in range(3):
        for dj in range(3):
            dil |= padded[di:di + H, dj:dj + W]
    hits = dil[i[visible], j[visible]] == 1
    return float(hits.mean()), int(visible.sum())
