"""
Hand rig: joint ordering, the rest pose, forward kinematics and a pose sampler.

Joint / bone ordering (fixed here, documented in docs/formats.md):

    0            wrist
    4k+1..4k+4   finger k root (CMC for the thumb, MCP otherwise), PIP, DIP, tip
                 with k = 0..4 for thumb, index, middle, ring, pinky

Bone i (i >= 1) ends at keypoint i and starts at keypoint ``PARENTS[i]``. Bone 0
is the forearm bone ending at the wrist; only its tail carries meaning.
"""

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np

from .errors import ConfigError, DomainError
from .rotation import axis_angle_matrix

NUM_JOINTS = 21
FINGERS = ("thumb", "index", "middle", "ring", "pinky")
FINGER_ROOTS = (1, 5, 9, 13, 17)
ROOT_BONE_LENGTH = 80.0
PALM_NORMAL = np.array([0.0, 0.0, 1.0])

PARENTS = tuple(None if i == 0 else (0 if i % 4 == 1 else i - 1) for i in range(NUM_JOINTS))

# per-finger joint names in chain order; joint j rotates bone root+j about its
# head. The first two joints of every finger also have an abduction axis.
_JOINTS = {
    "thumb": ("base", "cmc", "mcp", "ip"),
    "index": ("base", "mcp", "pip", "dip"),
    "middle": ("base", "mcp", "pip", "dip"),
    "ring": ("base", "mcp", "pip", "dip"),
    "pinky": ("base", "mcp", "pip", "dip"),
}
GLOBAL_ANGLES = ("global_x", "global_y", "global_z")


def angle_names():
    """Names of every sampled angle, in the order the sampler draws them."""
    names = list(GLOBAL_ANGLES)
    for f in FINGERS:
        j = _JOINTS[f]
        names += [f"{f}_{j[0]}_flex", f"{f}_{j[0]}_abd", f"{f}_{j[1]}_flex", f"{f}_{j[1]}_abd",
                  f"{f}_{j[2]}_flex", f"{f}_{j[3]}_flex"]
    return tuple(names)


@dataclass(frozen=True)
class Bone:
    head: np.ndarray
    tail: np.ndarray
    spin: float = 0.0
    parent: Optional[int] = None


def _frozen(a, shape):
    a = np.array(a, dtype=float)
    if a.shape != shape:
        raise DomainError(f"expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DomainError("non-finite coordinates")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Skeleton:
    """21 bones stored as head/tail/spin arrays (mm, radians)."""

    heads: np.ndarray
    tails: np.ndarray
    spins: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "heads", _frozen(self.heads, (NUM_JOINTS, 3)))
        object.__setattr__(self, "tails", _frozen(self.tails, (NUM_JOINTS, 3)))
        spins = np.zeros(NUM_JOINTS) if self.spins is None else self.spins
        object.__setattr__(self, "spins", _frozen(spins, (NUM_JOINTS,)))

    @property
    def bones(self):
        return [self.bone(i) for i in range(NUM_JOINTS)]

    def bone(self, i):
        return Bone(self.heads[i], self.tails[i], float(self.spins[i]), PARENTS[i])

    @property
    def vectors(self):
        return self.tails - self.heads

    @property
    def lengths(self):
        return np.linalg.norm(self.vectors, axis=1)

    def connectivity_error(self):
        """Largest |head(i) - tail(parent(i))| over bones 1..20."""
        par = np.array(PARENTS[1:])
        return float(np.max(np.linalg.norm(self.heads[1:] - self.tails[par], axis=1)))

    def translated(self, t):
        t = np.asarray(t, dtype=float)
        return Skeleton(self.heads + t, self.tails + t, self.spins)

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (np.array_equal(self.heads, other.heads) and np.array_equal(self.tails, other.tails)
                and np.array_equal(self.spins, other.spins))

    __hash__ = None


def as_keypoints(C):
    """Validate and return a (21, 3) float array."""
    C = np.asarray(C, dtype=float)
    if C.shape != (NUM_JOINTS, 3):
        raise DomainError(f"keypoint set must have shape (21, 3), got {C.shape}")
    if not np.all(np.isfinite(C)):
        raise DomainError("keypoint set contains non-finite values")
    return C


def load_rest_table(text=None):
    """Parse the rest-pose table. Returns (names, keypoints)."""
    if text is None:
        text = resources.files("mvhm.data").joinpath("rest_pose_v1.txt").read_text()
    names, pts = [], []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        idx, name, x, y, z = line.split()
        if int(idx) != len(names):
            raise DomainError(f"rest table out of order at joint {idx}")
        names.append(name)
        pts.append((float(x), float(y), float(z)))
    return tuple(names), as_keypoints(pts)


@lru_cache(maxsize=None)
def _rest():
    names, pts = load_rest_table()
    pts.flags.writeable = False
    return names, pts


JOINT_NAMES = _rest()[0]


def rest_keypoints():
    return _rest()[1].copy()


def skeleton_from_keypoints(C, spins=None, root_offset=None):
    """Chain-connected skeleton whose bone tails are the keypoints C."""
    C = as_keypoints(C)
    if root_offset is None:
        root_offset = np.array([0.0, -ROOT_BONE_LENGTH, 0.0])
    heads = np.empty_like(C)
    heads[0] = C[0] + root_offset
    heads[1:] = C[list(PARENTS[1:])]
    return Skeleton(heads, C, spins)


@lru_cache(maxsize=None)
def rest_skeleton():
    return skeleton_from_keypoints(_rest()[1])


def forward_kinematics(skeleton):
    """Keypoints of a posed skeleton: keypoint i is the tail of bone i."""
    return np.array(skeleton.tails)


def bone_vector(bone):
    return np.asarray(bone.tail, dtype=float) - np.asarray(bone.head, dtype=float)


def segment_lengths(C):
    """Length of each chain segment C[i] - C[parent(i)], i = 1..20."""
    C = as_keypoints(C)
    return np.linalg.norm(C[1:] - C[list(PARENTS[1:])], axis=1)


def check_limits(limits):
    known = set(angle_names())
    out = {}
    for name, rng in limits.items():
        if name not in known:
            raise ConfigError(f"unknown pose limit {name!r}")
        lo, hi = (float(v) for v in rng)
        if lo > hi:
            raise ConfigError(f"pose limit {name!r} has min {lo} > max {hi}")
        out[name] = (lo, hi)
    return out


def pose_frames(angles, rest=None):
    """
    Forward kinematics from joint angles in degrees (missing names are 0).

    Each joint rotates its bone and all descendants about the joint: flexion
    about ``finger_dir x palm_normal`` (curling toward the palm, +z), abduction
    about the palm normal. Returns (keypoints, per-bone rotation matrices);
    bone lengths are preserved exactly.
    """
    rest = rest_keypoints() if rest is None else as_keypoints(rest)
    a = {k: np.deg2rad(v) for k, v in angles.items()}
    g = (axis_angle_matrix([0, 0, 1], a.get("global_z", 0.0))
         @ axis_angle_matrix([0, 1, 0], a.get("global_y", 0.0))
         @ axis_angle_matrix([1, 0, 0], a.get("global_x", 0.0)))
    out = np.empty_like(rest)
    frames = np.empty((NUM_JOINTS, 3, 3))
    out[0] = rest[0]
    frames[0] = g
    for k, f in enumerate(FINGERS):
        root = FINGER_ROOTS[k]
        flex_axis = np.cross(rest[root] - rest[0], PALM_NORMAL)
        frame = g
        for j, joint in enumerate(_JOINTS[f]):
            bone = root + j
            frame = frame @ axis_angle_matrix(flex_axis, a.get(f"{f}_{joint}_flex", 0.0))
            if j < 2:
                frame = frame @ axis_angle_matrix(PALM_NORMAL, a.get(f"{f}_{joint}_abd", 0.0))
            frames[bone] = frame
            out[bone] = out[PARENTS[bone]] + frame @ (rest[bone] - rest[PARENTS[bone]])
    return out, frames


def pose_from_angles(angles, rest=None):
    return pose_frames(angles, rest)[0]


def sample_angles(seed, limits=None):
    from .config import default_pose_limits

    limits = check_limits(default_pose_limits() if limits is None else limits)
    rng = np.random.default_rng(seed)
    angles = {}
    for name in angle_names():
        lo, hi = limits.get(name, (0.0, 0.0))
        angles[name] = float(rng.uniform(lo, hi))
    return angles


def sample_pose(seed, limits=None):
    """Deterministic random hand pose; every segment keeps its rest length."""
    return pose_from_angles(sample_angles(seed, limits))
