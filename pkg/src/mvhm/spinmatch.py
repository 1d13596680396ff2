"""
Spin matching: pose the rest rig so its bone tails hit target keypoints while
keeping each bone's twist about its own axis consistent with the hand.

A bone's posed rotation is ``twist(v, spin) * swing``: ``swing`` carries the rest
bone vector ``u`` onto the posed vector ``v`` and ``twist`` spins about ``v``.
Finger root bones swing by the minimal rotation u -> v and measure their spin
from sign vectors ``(u x ref) x u`` built against a neighbouring finger. Every
other bone takes its parent's swing followed by the minimal bend onto its own
target, and copies its parent's spin, so a joint bends without adding twist.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReferenceError, DomainError, ReachabilityError
from .rotation import IDENTITY, normalize, quat_from_axis_angle, quat_mul, quat_rotate, quat_to_matrix
from .skeleton import FINGER_ROOTS, NUM_JOINTS, PARENTS, Skeleton, as_keypoints, skeleton_from_keypoints

ANTIPARALLEL_TOL = 1e-9
DEGENERATE_SIN = 1e-6


def minimal_rotation(u, v):
    """Quaternion of the smallest rotation taking direction u onto direction v."""
    u = normalize(u)
    v = normalize(v)
    c = float(np.dot(u, v))
    if 1.0 + c < ANTIPARALLEL_TOL:
        # half turn about a deterministic axis orthogonal to u
        axis = np.array([0.0, 0.0, 1.0]) - u[2] * u
        if np.linalg.norm(axis) < 1e-6:
            axis = np.array([1.0, 0.0, 0.0]) - u[0] * u
        axis = normalize(axis)
        return np.concatenate(([0.0], axis))
    q = np.concatenate(([1.0 + c], np.cross(u, v)))
    return q / np.linalg.norm(q)


def sign_vector(u, ref, tol=1e-9):
    """(u x ref) x u: the part of ref orthogonal to u, scaled by |u|^2."""
    u = np.asarray(u, dtype=float)
    ref = np.asarray(ref, dtype=float)
    nu = np.linalg.norm(u)
    if not nu > 0:
        raise DomainError("zero-length bone vector")
    w = np.cross(u, ref)
    if np.linalg.norm(w) <= tol * nu * np.linalg.norm(ref):
        raise DegenerateReferenceError("spin reference is parallel to the bone vector")
    return np.cross(w, u)


def spin_angle(e1, e2, axis):
    """Signed angle in (-pi, pi] turning e1 onto e2 about axis (right-hand rule)."""
    a = normalize(axis)
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    p1 = e1 - np.dot(e1, a) * a
    p2 = e2 - np.dot(e2, a) * a
    if np.linalg.norm(p1) == 0 or np.linalg.norm(p2) == 0:
        raise DomainError("sign vector has no component orthogonal to the spin axis")
    theta = float(np.arctan2(np.dot(np.cross(p1, p2), a), np.dot(p1, p2)))
    return np.pi if theta == -np.pi else theta


@dataclass(frozen=True, eq=False)
class SpinSolution:
    swings: np.ndarray          # (21, 4) quaternions, rest vector -> posed vector
    spins: np.ndarray           # (21,) radians about the posed bone vector
    skeleton: Skeleton          # posed rig, bone spins == spins
    rest: Skeleton
    references: tuple = ()      # reference bone used by each finger root
    warnings: tuple = field(default=())

    def rotations(self):
        """Posed rotation of every bone, twist applied after swing, as quaternions."""
        v = self.skeleton.vectors
        out = np.empty((NUM_JOINTS, 4))
        for i in range(NUM_JOINTS):
            if self.spins[i] == 0.0:
                out[i] = self.swings[i]
            else:
                out[i] = quat_mul(quat_from_axis_angle(v[i], self.spins[i]), self.swings[i])
        return out

    def rotation_matrices(self):
        return np.stack([quat_to_matrix(q) for q in self.rotations()])

    def transforms(self):
        """(R, t) per bone mapping rest-space points to posed space: x' = R x + t."""
        R = self.rotation_matrices()
        t = self.skeleton.heads - np.einsum("bij,bj->bi", R, self.rest.heads)
        return R, t

    def with_spins(self, spins):
        spins = np.array(spins, dtype=float)
        skel = Skeleton(self.skeleton.heads, self.skeleton.tails, spins)
        return SpinSolution(self.swings, skel.spins, skel, self.rest, self.references, self.warnings)

    @property
    def net_twist(self):
        """Largest |spin| over the finger root bones, radians."""
        return float(np.max(np.abs(self.spins[list(FINGER_ROOTS)])))


def identity_solution(rest):
    swings = np.tile(IDENTITY, (NUM_JOINTS, 1))
    return SpinSolution(swings, rest.spins, rest, rest, tuple(r + 4 if r != 17 else 13 for r in FINGER_ROOTS))


def check_reachable(rest, C, tol_len=1e-3):
    """Raise ReachabilityError if any segment of C departs from the rest length."""
    rest_len = rest.lengths[1:]
    seg = np.linalg.norm(C[1:] - C[list(PARENTS[1:])], axis=1)
    rel = np.abs(seg - rest_len) / rest_len
    worst = int(np.argmax(rel))
    if rel[worst] > tol_len:
        bone = worst + 1
        raise ReachabilityError(
            f"segment of bone {bone} has length {seg[worst]:.6g} mm, rig length "
            f"{rest_len[worst]:.6g} mm (relative error {rel[worst]:.3g} > {tol_len:g})",
            bone=bone, relative_error=float(rel[worst]))


def _reference_order(i):
    """Reference finger roots to try for finger root i: the fixed neighbour first."""
    adj = i - 4 if i == 17 else i + 4
    roots = list(FINGER_ROOTS)
    k = roots.index(adj)
    order = [adj] + [roots[(k + j) % len(roots)] for j in range(1, len(roots))]
    return [r for r in order if r != i]


def spin_match(rest, C, tol_len=1e-3):
    """Pose `rest` onto keypoints C (21x3 mm) and resolve every bone's spin."""
    C = as_keypoints(C)
    check_reachable(rest, C, tol_len)
    posed_heads_root = rest.heads[0] - rest.tails[0]
    u_all = rest.vectors
    swings = np.tile(IDENTITY, (NUM_JOINTS, 1))
    spins = np.zeros(NUM_JOINTS)
    refs, warnings = [], []

    for i in FINGER_ROOTS:
        u = u_all[i]
        v = C[i] - C[0]
        for n_try, adj in enumerate(_reference_order(i)):
            try:
                e1 = sign_vector(u, u_all[adj], tol=DEGENERATE_SIN)
                e2 = sign_vector(v, C[adj] - C[0], tol=DEGENERATE_SIN)
            except DegenerateReferenceError:
                continue
            if n_try:
                warnings.append(f"bone {i}: reference bone collinear, fell back to bone {adj}")
            break
        else:
            raise DegenerateReferenceError(f"bone {i}: every reference finger is collinear")
        refs.append(adj)
        swing = minimal_rotation(u, v)
        swings[i] = swing
        spins[i] = spin_angle(quat_rotate(swing, e1), e2, v)

    for i in range(1, NUM_JOINTS):
        if i % 4 != 1:
            # bend from where the parent's swing carries u onto the target
            carried = quat_rotate(swings[i - 1], u_all[i])
            swings[i] = quat_mul(minimal_rotation(carried, C[i] - C[i - 1]), swings[i - 1])
            spins[i] = spins[i - 1]

    posed = skeleton_from_keypoints(C, spins=spins, root_offset=posed_heads_root)
    return SpinSolution(swings, posed.spins, posed, rest, tuple(refs), tuple(warnings))
