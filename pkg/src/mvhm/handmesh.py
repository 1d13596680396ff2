"""
Procedural template hand mesh, skinning weights and linear blend skinning.

The template is built per finger as one closed tube along the finger's rest ray
(wrist -> tip): elliptical cross-sections around the metacarpal bone form the
palm slab, round ones around the phalanges, a rounded cap closed by a flat fan at
the tip and a pole vertex at the wrist. The five wrist poles are welded by
snapping (2 mm), so the mesh graph is connected. With no tip pole each finger
contributes an even number of vertices besides the shared wrist vertex, which
lets the mesh graph carry a near-perfect matching for coarsening. Every vertex is ``point_on_bone + radius * offset``
for the bone it was built around (``vertex_bone``), which keeps the geometry
linear in the radius table.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import DomainError, GenerationError
from .skeleton import FINGER_ROOTS, NUM_JOINTS, PALM_NORMAL, rest_skeleton

DEFAULT_BUDGET = 2560
MIN_BUDGET = 500
WELD_DISTANCE = 2.0
RAMP_LENGTH = 20.0
CAP_RINGS = 3
MIN_BODY_RINGS = 9
KERNEL_SUPPORT = 1.5
MAX_INFLUENCES = 4

# (lateral, palm-normal) semi-axes in mm per bone; metacarpals are flattened
DEFAULT_RADII = {
    1: (11.0, 11.0), 2: (11.0, 11.0), 3: (10.0, 10.0), 4: (9.0, 9.0),
    5: (10.0, 12.0), 6: (9.0, 9.0), 7: (8.0, 8.0), 8: (7.0, 7.0),
    9: (10.0, 12.5), 10: (9.5, 9.5), 11: (8.5, 8.5), 12: (7.5, 7.5),
    13: (9.5, 12.0), 14: (9.0, 9.0), 15: (8.0, 8.0), 16: (7.0, 7.0),
    17: (9.0, 11.0), 18: (8.0, 8.0), 19: (7.0, 7.0), 20: (6.5, 6.5),
}


@dataclass(frozen=True, eq=False)
class TemplateMesh:
    rest_vertices: np.ndarray   # (N, 3) mm
    faces: np.ndarray           # (M, 3) int
    adjacency: sparse.csr_matrix
    skin_weights: np.ndarray    # (N, 21), rows sum to 1
    vertex_bone: np.ndarray     # (N,) bone each vertex was generated around
    skeleton: object            # rest Skeleton the weights refer to

    @property
    def num_vertices(self):
        return len(self.rest_vertices)

    def edges(self):
        a = sparse.triu(self.adjacency, k=1).tocoo()
        return np.stack([a.row, a.col], axis=1)


@dataclass(frozen=True, eq=False)
class DeformedMesh:
    vertices: np.ndarray
    faces: np.ndarray


def ring_size(budget):
    return int(np.clip(2 * round(np.sqrt(budget / 40.0)), 8, 32))


def point_segment_distance(points, a, b):
    """Distance from each point (N, 3) to segments a[k]-b[k] -> (N, K)."""
    ab = b - a
    denom = np.einsum("ki,ki->k", ab, ab)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nki,ki->nk", ap, ab) / denom, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def _finger_tube(skel, root, n_body, M, radii):
    """Vertices (wrist pole first), their bones, and faces of one finger."""
    bones = [root + j for j in range(4)]
    wrist = skel.heads[root]
    tip = skel.tails[bones[-1]]
    length = np.linalg.norm(tip - wrist)
    d = (tip - wrist) / length
    n = PALM_NORMAL - np.dot(PALM_NORMAL, d) * d
    n /= np.linalg.norm(n)
    lat = np.cross(d, n)
    ends = np.cumsum([skel.lengths[b] for b in bones])
    phi = 2.0 * np.pi * np.arange(M) / M
    cos_phi, sin_phi = np.cos(phi)[:, None], np.sin(phi)[:, None]

    verts = [wrist[None]]
    vbone = [bones[0]]
    for j in range(1, n_body + 1):
        s = length * j / n_body
        k = min(int(np.searchsorted(ends, s - 1e-9)), 3)
        a, c = radii[bones[k]]
        g = np.sqrt(min(1.0, s / RAMP_LENGTH))
        verts.append(wrist + s * d + g * (a * cos_phi * lat + c * sin_phi * n))
        vbone += [bones[k]] * M
    a, c = radii[bones[-1]]
    r_ax = 0.5 * (a + c)
    for k in range(1, CAP_RINGS + 1):
        alpha = 0.5 * np.pi * k / (CAP_RINGS + 1)
        ring = np.cos(alpha) * (a * cos_phi * lat + c * sin_phi * n) + np.sin(alpha) * r_ax * d
        verts.append(tip + ring)
        vbone += [bones[-1]] * M
    verts = np.concatenate(verts)

    n_rings = n_body + CAP_RINGS
    ring_idx = 1 + np.arange(n_rings)[:, None] * M + np.arange(M)[None, :]
    nxt = np.roll(np.arange(M), -1)
    faces = [np.stack([np.zeros(M, int), ring_idx[0, nxt], ring_idx[0]], axis=1)]
    for j in range(n_rings - 1):
        a0, a1 = ring_idx[j], ring_idx[j, nxt]
        b0, b1 = ring_idx[j + 1], ring_idx[j + 1, nxt]
        faces.append(np.stack([a0, a1, b1], axis=1))
        faces.append(np.stack([a0, b1, b0], axis=1))
    last = ring_idx[-1]
    faces.append(np.stack([np.full(M - 2, last[0]), last[1:-1], last[2:]], axis=1))
    faces = np.concatenate(faces)

    if signed_volume(verts, faces) < 0:
        faces = faces[:, ::-1]
    return verts, np.array(vbone), faces


def signed_volume(verts, faces):
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


def _weld(verts, faces, candidates, distance):
    """Merge candidate vertices closer than `distance`; keeps the lowest index."""
    tree = cKDTree(verts[candidates])
    target = np.arange(len(verts))
    for i, j in sorted(tree.query_pairs(distance)):
        a, b = candidates[i], candidates[j]
        ra, rb = target[a], target[b]
        lo, hi = min(ra, rb), max(ra, rb)
        target[target == hi] = lo
    keep = np.unique(target)
    remap = np.full(len(verts), -1)
    remap[keep] = np.arange(len(keep))
    return keep, remap[target][faces], remap[target]


def skinning_weights(vertices, skeleton, radii):
    """
    Inverse-distance weights to the bone segments, faded out by a cubic kernel
    once a bone is more than 1.5 radii farther than the nearest one, truncated
    to the 4 largest and renormalized. Bone 0 carries no weight.
    """
    bones = np.arange(1, NUM_JOINTS)
    dist = point_segment_distance(vertices, skeleton.heads[bones], skeleton.tails[bones])
    nearest = np.argmin(dist, axis=1)
    dmin = dist[np.arange(len(dist)), nearest]
    r_near = np.array([np.mean(radii[b]) for b in bones])[nearest]
    x = np.clip((dist - dmin[:, None]) / (KERNEL_SUPPORT * r_near[:, None]), 0.0, 1.0)
    w = (1.0 - 3.0 * x ** 2 + 2.0 * x ** 3) / np.maximum(dist, 1e-6)
    order = np.argsort(-w, axis=1, kind="stable")
    w[np.arange(len(w))[:, None], order[:, MAX_INFLUENCES:]] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    out = np.zeros((len(vertices), NUM_JOINTS))
    out[:, 1:] = w
    return out


def mesh_graph(faces, num_vertices=None):
    """Symmetric 0/1 adjacency from triangle edges (zero diagonal)."""
    faces = np.asarray(faces)
    if num_vertices is None:
        num_vertices = int(faces.max()) + 1
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = e[e[:, 0] != e[:, 1]]
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    A = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(num_vertices, num_vertices))
    A.data[:] = 1.0
    A.eliminate_zeros()
    return A


def template_problems(mesh):
    """List of violated TemplateMesh invariants (empty when valid)."""
    problems = []
    n = mesh.num_vertices
    W = mesh.skin_weights
    if W.shape != (n, NUM_JOINTS) or np.any(W < 0):
        problems.append("skin weights must be a nonnegative N x 21 matrix")
    else:
        if np.max(np.abs(W.sum(axis=1) - 1.0)) > 1e-9:
            problems.append("skin weight rows do not sum to 1")
        if np.max((W > 0).sum(axis=1)) > MAX_INFLUENCES:
            problems.append("more than 4 influences on a vertex")
    A = mesh.adjacency
    if (A - A.T).count_nonzero() or A.diagonal().any():
        problems.append("adjacency not symmetric with zero diagonal")
    elif connected_components(A, directed=False)[0] != 1:
        problems.append("mesh graph is not connected")
    F = mesh.faces
    if F.min() < 0 or F.max() >= n:
        problems.append("face references an invalid vertex")
    if np.any((F[:, 0] == F[:, 1]) | (F[:, 1] == F[:, 2]) | (F[:, 0] == F[:, 2])):
        problems.append("degenerate face with repeated vertex")
    e = np.sort(np.concatenate([F[:, [0, 1]], F[:, [1, 2]], F[:, [2, 0]]]), axis=1)
    _, counts = np.unique(e, axis=0, return_counts=True)
    if counts.max() > 2:
        problems.append("edge shared by more than two faces")
    return problems


def generate_template(vertex_budget=DEFAULT_BUDGET, radii=None, skeleton=None):
    """Deterministic template mesh with roughly `vertex_budget` vertices."""
    if vertex_budget < MIN_BUDGET:
        raise GenerationError(f"vertex budget {vertex_budget} < {MIN_BUDGET}")
    skeleton = rest_skeleton() if skeleton is None else skeleton
    radii = dict(DEFAULT_RADII if radii is None else radii)
    M = ring_size(vertex_budget)
    rings = int(round((vertex_budget - 1) / (5 * M)))
    n_body = rings - CAP_RINGS
    if n_body < MIN_BODY_RINGS:
        raise GenerationError(f"vertex budget {vertex_budget} too small to close the surface")

    verts, vbone, faces, poles = [], [], [], []
    offset = 0
    for root in FINGER_ROOTS:
        v, b, f = _finger_tube(skeleton, root, n_body, M, radii)
        verts.append(v)
        vbone.append(b)
        faces.append(f + offset)
        poles.append(offset)
        offset += len(v)
    verts = np.concatenate(verts)
    vbone = np.concatenate(vbone)
    faces = np.concatenate(faces)

    keep, faces, _ = _weld(verts, faces, np.array(poles), WELD_DISTANCE)
    verts, vbone = verts[keep], vbone[keep]
    verts.flags.writeable = False
    faces.flags.writeable = False
    weights = skinning_weights(verts, skeleton, radii)
    weights.flags.writeable = False
    mesh = TemplateMesh(verts, faces, mesh_graph(faces, len(verts)), weights, vbone, skeleton)
    problems = template_problems(mesh)
    if problems:
        raise GenerationError("; ".join(problems))
    if abs(len(verts) - vertex_budget) > 0.05 * vertex_budget:
        raise GenerationError(f"{len(verts)} vertices is outside 5% of budget {vertex_budget}")
    return mesh


def skin(mesh, solution):
    """Linear blend skinning of the template by a SpinSolution."""
    if not (np.array_equal(solution.rest.heads, mesh.skeleton.heads)
            and np.array_equal(solution.rest.tails, mesh.skeleton.tails)):
        raise DomainError("solution was computed for a different rest skeleton")
    R, t = solution.transforms()
    V = mesh.rest_vertices
    # displacement form: identity transforms reproduce the rest mesh bit-exactly
    moved = np.einsum("bij,nj->nbi", R - np.eye(3), V) + t[None]
    out = V + np.einsum("nb,nbi->ni", mesh.skin_weights, moved)
    return DeformedMesh(out, mesh.faces)


def edge_distortion(mesh, vertices):
    """Mean relative edge-length change of a deformed mesh versus the rest mesh."""
    e = mesh.edges()
    rest = np.linalg.norm(mesh.rest_vertices[e[:, 0]] - mesh.rest_vertices[e[:, 1]], axis=1)
    posed = np.linalg.norm(vertices[e[:, 0]] - vertices[e[:, 1]], axis=1)
    return float(np.mean(np.abs(posed - rest) / rest))
