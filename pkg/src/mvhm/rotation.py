"""
Unit quaternion helpers.

Quaternions are numpy arrays in (w, x, y, z) order. Matrices are 3x3 and act on
column vectors, so ``quat_to_matrix(q) @ v == quat_rotate(q, v)``.
"""

import numpy as np

from .errors import DomainError

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(v, eps=0.0):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if not n > eps:
        raise DomainError("cannot normalize a zero-length vector")
    return v / n


def quat_from_axis_angle(axis, angle):
    axis = normalize(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_mul(a, b):
    """Hamilton product ``a * b`` (apply b first, then a)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Convert a rotation matrix to a unit quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise DomainError(f"expected 3x3 rotation matrix, got {R.shape}")
    if not np.allclose(R.T @ R, np.eye(3), atol=1e-9) or np.linalg.det(R) < 0:
        raise DomainError("matrix is not a proper rotation")
    # Shepperd's method: pivot on the largest diagonal term
    tr = np.trace(R)
    diag = np.diag(R)
    k = int(np.argmax(np.concatenate(([tr], diag))))
    if k == 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def as_quat(rot):
    """Accept a quaternion (4,) or a rotation matrix (3, 3) and return a quaternion."""
    rot = np.asarray(rot, dtype=float)
    if rot.shape == (4,):
        n = np.linalg.norm(rot)
        if abs(n - 1.0) > 1e-9:
            raise DomainError(f"quaternion norm {n} is not 1")
        return rot
    return matrix_to_quat(rot)


def quat_rotate(q, v):
    return quat_to_matrix(q) @ np.asarray(v, dtype=float)


def quat_angle(q):
    """Rotation angle in [0, pi]."""
    return 2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0]))


def axis_angle_matrix(axis, angle):
    """Rodrigues formula; exactly the identity for angle == 0."""
    k = normalize(axis)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
