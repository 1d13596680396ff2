import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from mvhm.errors import DegenerateReferenceError, DomainError, ReachabilityError
from mvhm.handmesh import edge_distortion, skin
from mvhm.rotation import quat_angle, quat_rotate, quat_to_matrix
from mvhm.skeleton import FINGER_ROOTS, forward_kinematics, rest_keypoints, sample_pose
from mvhm.spinmatch import minimal_rotation, sign_vector, spin_angle, spin_match

from conftest import random_rotation, twist_suite

finite = st.floats(-10, 10, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array).filter(lambda v: np.linalg.norm(v) > 1e-2)


def test_minimal_rotation_identity():
    assert np.allclose(minimal_rotation([1, 0, 0], [1, 0, 0]), [1, 0, 0, 0])


def test_minimal_rotation_quarter_turn():
    q = minimal_rotation([1, 0, 0], [0, 1, 0])
    assert np.allclose(quat_to_matrix(q), Rotation.from_rotvec([0, 0, np.pi / 2]).as_matrix(), atol=1e-12)


@given(vec3, vec3)
@settings(max_examples=200, deadline=None)
def test_minimal_rotation_against_two_vector_oracle(u, v):
    uh, vh = u / np.linalg.norm(u), v / np.linalg.norm(v)
    if np.dot(uh, vh) < -1 + 1e-6:
        return
    q = minimal_rotation(u, v)
    assert np.allclose(quat_rotate(q, uh), vh, atol=1e-9)
    assert abs(quat_angle(q) - np.arccos(np.clip(uh @ vh, -1, 1))) < 1e-6
    # scipy's align_vectors gives the minimal rotation for a single pair
    ref, _ = Rotation.align_vectors([vh], [uh])
    assert np.allclose(quat_to_matrix(q), ref.as_matrix(), atol=1e-6)


def test_minimal_rotation_antiparallel():
    q = minimal_rotation([1, 0, 0], [-1, 0, 0])
    assert np.allclose(q, [0, 0, 0, 1])
    q = minimal_rotation([0, 0, 1], [0, 0, -1])     # +z rejected away, falls back to +x
    assert np.allclose(q, [0, 1, 0, 0])


def test_minimal_rotation_zero_vector():
    with pytest.raises(DomainError):
        minimal_rotation([0, 0, 0], [1, 0, 0])


def test_sign_vector_examples():
    assert np.allclose(sign_vector([1, 0, 0], [0, 1, 0]), [0, 1, 0])
    assert np.allclose(sign_vector([1, 1, 0], [0, 1, 0]), [-1, 1, 0])
    with pytest.raises(DegenerateReferenceError):
        sign_vector([0, 0, 2], [0, 0, 5])


@given(vec3, vec3)
@settings(max_examples=200, deadline=None)
def test_sign_vector_orthogonal(u, r):
    try:
        e = sign_vector(u, r)
    except DegenerateReferenceError:
        return
    assert abs(e @ u) <= 1e-9 * (u @ u) * np.linalg.norm(r) * 10
    # lies in span{u, r}
    n = np.cross(u, r)
    assert abs(e @ n) <= 1e-9 * np.linalg.norm(e) * np.linalg.norm(n) * 10


def test_spin_angle_examples():
    assert spin_angle([0, 1, 0], [0, 1, 0], [1, 0, 0]) == 0.0
    assert np.isclose(spin_angle([0, 1, 0], [0, 0, 1], [1, 0, 0]), np.pi / 2)
    assert spin_angle([0, 1, 0], [0, -1, 0], [1, 0, 0]) == np.pi


def test_spin_angle_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(500):
        axis = rng.standard_normal(3)
        a = axis / np.linalg.norm(axis)
        e1 = np.cross(a, rng.standard_normal(3))
        e2 = np.cross(a, rng.standard_normal(3))
        th = spin_angle(e1, e2, axis)
        assert -np.pi < th <= np.pi
        r = Rotation.from_rotvec(a * th).apply(e1)
        assert np.allclose(r / np.linalg.norm(r), e2 / np.linalg.norm(e2), atol=1e-9)


def test_identity_pose(rest):
    sol = spin_match(rest, rest_keypoints())
    assert np.allclose(sol.swings, [1, 0, 0, 0], atol=1e-12)
    assert np.allclose(sol.spins, 0, atol=1e-9)
    assert sol.references == (5, 9, 13, 17, 13)


def test_round_trip_and_invariants(rest):
    for seed in range(200):
        C = sample_pose(seed)
        sol = spin_match(rest, C)
        assert np.max(np.abs(forward_kinematics(sol.skeleton) - C)) < 1e-6
        assert sol.skeleton.connectivity_error() < 1e-9
        for i in range(1, 21):
            if i % 4 != 1:
                assert sol.spins[i] == sol.spins[i - 1]
        # swing maps rest direction onto posed direction
        u = rest.vectors / rest.lengths[:, None]
        v = sol.skeleton.vectors / sol.skeleton.lengths[:, None]
        for i in range(1, 21):
            assert np.allclose(quat_rotate(sol.swings[i], u[i]), v[i], atol=1e-9)


def test_rigid_motion_moves_mesh_rigidly(rest, template):
    rng = np.random.default_rng(11)
    for _ in range(5):
        R = random_rotation(rng)
        t = rng.uniform(-200, 200, 3)
        C = rest_keypoints() @ R.T + t
        sol = spin_match(rest, C)
        assert np.max(np.abs(forward_kinematics(sol.skeleton) - C)) < 1e-6
        V = skin(template, sol).vertices
        assert np.max(np.abs(V - (template.rest_vertices @ R.T + t))) < 1e-6


def test_rigid_equivariance(rest):
    rng = np.random.default_rng(5)
    C = sample_pose(17)
    R, t = random_rotation(rng), rng.uniform(-50, 50, 3)
    D = C @ R.T + t
    assert np.max(np.abs(forward_kinematics(spin_match(rest, D).skeleton) - D)) < 1e-6
    # a finger root's full rotation is the unique one taking (u, e1) to (v, e2),
    # so it composes with the rigid motion
    Qc = spin_match(rest, C).rotation_matrices()
    Qd = spin_match(rest, D).rotation_matrices()
    for i in FINGER_ROOTS:
        assert np.allclose(Qd[i], R @ Qc[i], atol=1e-9)


def test_unreachable_reports_worst_segment(rest):
    C = rest_keypoints()
    C[12:17] += [0, 30, 0]      # stretches bone 12 (middle tip) and moves the ring finger
    C[14] += [0, 5, 0]
    with pytest.raises(ReachabilityError) as info:
        spin_match(rest, C)
    assert info.value.bone == 12
    assert info.value.relative_error > 1e-3


def test_degenerate_reference_falls_back(rest):
    # fold the middle finger root onto the index root direction
    C = rest_keypoints()
    d = C[5] / np.linalg.norm(C[5])
    L = np.linalg.norm(C[9])
    shift = d * L - C[9]
    C[9:13] += shift
    sol = spin_match(rest, C)
    assert sol.references[1] == 13
    assert sol.warnings and "bone 5" in sol.warnings[0]
    assert np.max(np.abs(forward_kinematics(sol.skeleton) - C)) < 1e-6


def test_deterministic(rest):
    a, b = spin_match(rest, sample_pose(4)), spin_match(rest, sample_pose(4))
    assert np.array_equal(a.swings, b.swings) and np.array_equal(a.spins, b.spins)


def test_spins_reduce_distortion_on_twisted_poses(template):
    for seed, C, sol in twist_suite(20):
        with_spin = edge_distortion(template, skin(template, sol).vertices)
        without = edge_distortion(template, skin(template, sol.with_spins(np.zeros(21))).vertices)
        assert with_spin < without, seed


def test_net_twist_is_root_spin():
    sol = spin_match(__import__("mvhm.skeleton", fromlist=["x"]).rest_skeleton(), sample_pose(1))
    assert sol.net_twist == np.max(np.abs(sol.spins[list(FINGER_ROOTS)]))
