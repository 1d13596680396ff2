"""
Pinhole cameras, the look-at camera ring, projection and DLT triangulation.

Camera frame follows the OpenCV convention: x right, y down, z forward.
Extrinsics map world to camera, ``q = R p + t``; all lengths in mm.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DomainError, TriangulationError
from .rotation import normalize


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise DomainError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DomainError("principal point outside the image")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @classmethod
    def from_K(cls, K, width, height):
        K = np.asarray(K, dtype=float)
        if K[0, 1] != 0 or K[1, 0] != 0 or tuple(K[2]) != (0.0, 0.0, 1.0):
            raise DomainError("K must be a zero-skew upper-triangular pinhole matrix")
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]), int(width), int(height))


@dataclass(frozen=True, eq=False)
class Extrinsics:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        t = np.array(self.t, dtype=float).reshape(3)
        if R.shape != (3, 3) or np.max(np.abs(R.T @ R - np.eye(3))) > 1e-9 or np.linalg.det(R) < 0:
            raise DomainError("extrinsic rotation is not orthonormal")
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def center(self):
        return -self.R.T @ self.t

    @property
    def Rt(self):
        return np.hstack([self.R, self.t[:, None]])

    @classmethod
    def from_Rt(cls, Rt):
        Rt = np.asarray(Rt, dtype=float)
        return cls(Rt[:, :3], Rt[:, 3])


@dataclass(frozen=True, eq=False)
class CameraRig:
    views: tuple        # ((Intrinsics, Extrinsics), ...)
    target: np.ndarray
    ring_axis: np.ndarray
    radius: float

    def __len__(self):
        return len(self.views)

    @property
    def positions(self):
        return np.array([e.center for _, e in self.views])


def look_at(position, target, up, fallback_up=(0.0, 0.0, 1.0)):
    """Extrinsics of a camera at `position` looking at `target`, image-up along `up`."""
    position = np.asarray(position, dtype=float)
    forward = normalize(np.asarray(target, dtype=float) - position)
    for cand in (up, fallback_up):
        cand = np.asarray(cand, dtype=float)
        up_perp = cand - np.dot(cand, forward) * forward
        if np.linalg.norm(up_perp) > 1e-9 * max(np.linalg.norm(cand), 1.0):
            break
    else:
        raise DomainError("up vector parallel to the viewing direction")
    down = -normalize(up_perp)
    right = np.cross(down, forward)
    R = np.stack([right, down, forward])
    return Extrinsics(R, -R @ position)


def ring_frame(ring_axis, start_dir=None):
    """Right-handed orthonormal (a, b, axis); a is start_dir with the axis part removed."""
    axis = normalize(ring_axis, eps=1e-12)
    candidates = [] if start_dir is None else [start_dir]
    candidates += [(1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
    for c in candidates:
        c = np.asarray(c, dtype=float)
        a = c - np.dot(c, axis) * axis
        if np.linalg.norm(a) > 1e-6 * np.linalg.norm(c):
            a = normalize(a)
            return a, np.cross(axis, a), axis
    raise DomainError("cannot build a ring frame")  # unreachable for a unit axis


def build_ring(target, ring_axis, radius, n, intrinsics, start_dir=None, fallback_up=(0.0, 0.0, 1.0)):
    """n look-at cameras evenly spaced on a circle of `radius` around `target`."""
    if not radius > 0:
        raise DomainError("ring radius must be positive")
    if n < 2:
        raise DomainError("a ring needs at least two cameras")
    ring_axis = np.asarray(ring_axis, dtype=float)
    if not np.linalg.norm(ring_axis) > 0:
        raise DomainError("degenerate ring axis")
    target = np.asarray(target, dtype=float)
    a, b, axis = ring_frame(ring_axis, start_dir)
    views = []
    for k in range(n):
        theta = 2.0 * np.pi * k / n
        pos = target + radius * (np.cos(theta) * a + np.sin(theta) * b)
        views.append((intrinsics, look_at(pos, target, axis, fallback_up)))
    return CameraRig(tuple(views), target, axis, float(radius))


def focal_for_fill(distance, bound_radius, width, fill=0.7):
    """Focal length (px) at which a sphere of `bound_radius` seen from `distance`
    spans `fill` of the half image width."""
    return fill * 0.5 * width * np.sqrt(distance ** 2 - bound_radius ** 2) / bound_radius


def to_camera(extr, p):
    return np.asarray(p, dtype=float) @ extr.R.T + extr.t


def project(intr, extr, p, eps=1.0):
    """Project world point(s) p (3,) or (N, 3) -> (u, v, depth)."""
    q = to_camera(extr, p)
    z = q[..., 2]
    if np.any(z <= eps):
        raise BehindCameraError(f"point at camera depth {np.min(z):.6g} mm is behind the camera")
    u = intr.fx * q[..., 0] / z + intr.cx
    v = intr.fy * q[..., 1] / z + intr.cy
    return u, v, z


def unproject(intr, extr, u, v, depth):
    """World point(s) seen at pixel (u, v) with camera depth `depth`."""
    depth = np.asarray(depth, dtype=float)
    if np.any(depth <= 0):
        raise DomainError("depth must be positive")
    x = (np.asarray(u, dtype=float) - intr.cx) / intr.fx * depth
    y = (np.asarray(v, dtype=float) - intr.cy) / intr.fy * depth
    q = np.stack([x, y, depth], axis=-1)
    return (q - extr.t) @ extr.R


def triangulate(observations, rank_tol=1e-12):
    """
    Linear (DLT) triangulation from [(Intrinsics, Extrinsics, u, v), ...].

    Pixels are conditioned to normalized image coordinates (shift by the
    principal point, scale by the focal length) and the world by the camera
    centers' centroid and spread; the 4x4 normal equations are solved by a
    symmetric eigendecomposition.
    """
    if len(observations) < 2:
        raise TriangulationError("need at least two views")
    centers = np.array([e.center for _, e, _, _ in observations])
    c0 = centers.mean(axis=0)
    scale = np.mean(np.linalg.norm(centers - c0, axis=1))
    if scale <= 1e-9:
        raise TriangulationError("all observations share one camera center")
    denorm = np.eye(4)
    denorm[:3, :3] *= scale
    denorm[:3, 3] = c0
    rows = []
    for intr, extr, u, v in observations:
        P = extr.Rt @ denorm
        x = (u - intr.cx) / intr.fx
        y = (v - intr.cy) / intr.fy
        for r in (x * P[2] - P[0], y * P[2] - P[1]):
            rows.append(r / np.linalg.norm(r))
    A = np.array(rows)
    w, V = np.linalg.eigh(A.T @ A)
    if w[1] <= rank_tol * w[-1]:
        raise TriangulationError("rank-deficient system (rays are parallel or coincident)")
    h = V[:, 0]
    if abs(h[3]) < 1e-12 * np.linalg.norm(h):
        raise TriangulationError("triangulated point at infinity")
    return scale * h[:3] / h[3] + c0


def reprojection_errors(X, observations):
    """Pixel distance between each observation and the projection of X."""
    out = []
    for intr, extr, u, v in observations:
        pu, pv, _ = project(intr, extr, X, eps=0.0)
        out.append(np.hypot(pu - u, pv - v))
    return np.array(out)
