import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvhm.errors import DomainError
from mvhm.metrics import (auc, depth_loss, epe, evaluate_poses, heatmap_loss, mesh_loss, pck, pck_curve, pose_loss)

from conftest import random_rotation


def gt_and_pred(rng, n=5, sigma=10.0):
    gt = rng.uniform(-100, 100, (n, 21, 3))
    return gt, gt + rng.normal(0, sigma, gt.shape)


def test_epe_examples():
    gt = np.zeros((1, 21, 3))
    assert epe(gt, gt) == 0.0
    pred = gt.copy()
    pred[0, 7] = [3, 4, 0]
    assert np.isclose(epe(pred, gt), 5 / 21)
    with pytest.raises(DomainError):
        epe(np.zeros((2, 21, 3)), gt)
    with pytest.raises(DomainError):
        epe(np.zeros((1, 20, 3)), np.zeros((1, 20, 3)))


def test_epe_rigid_invariance():
    rng = np.random.default_rng(0)
    gt, pred = gt_and_pred(rng)
    R, t = random_rotation(rng), rng.uniform(-50, 50, 3)
    assert abs(epe(pred @ R.T + t, gt @ R.T + t) - epe(pred, gt)) < 1e-9


def test_pck_examples():
    gt = np.zeros((2, 21, 3))
    pred = gt.copy()
    pred[0, :, 0] = 10
    pred[1, :, 0] = 30
    assert pck(pred, gt, 20) == 0.5
    assert pck(gt, gt, 0) == 1.0
    with pytest.raises(DomainError):
        pck(gt, gt, -1)


def test_pck_monotone():
    rng = np.random.default_rng(1)
    gt, pred = gt_and_pred(rng, 50)
    thr, frac = pck_curve(np.linalg.norm(pred - gt, axis=-1), 0, 50, 200)
    assert np.all(np.diff(frac) >= 0)
    assert np.all((frac >= 0) & (frac <= 1))


def test_auc_examples():
    gt = np.zeros((1, 21, 3))
    assert auc(gt, gt, 0, 50) == 1.0
    assert auc(gt, gt, 20, 50) == 1.0
    pred = gt.copy()
    pred[..., 0] = 25.0
    assert auc(pred, gt, 20, 50, steps=4) == 5 / 6
    with pytest.raises(DomainError):
        auc(gt, gt, 50, 20)
    with pytest.raises(DomainError):
        auc(gt, gt, 0, 50, steps=1)


def test_auc_below_one_when_any_error_exceeds_first_threshold():
    gt = np.zeros((1, 21, 3))
    pred = gt.copy()
    pred[0, 3, 1] = 1e-6
    assert auc(pred, gt, 0, 50) < 1.0


@given(st.floats(0, 80), st.integers(2, 150))
@settings(max_examples=50, deadline=None)
def test_auc_in_unit_interval(scale, steps):
    rng = np.random.default_rng(int(scale * 10))
    gt, pred = gt_and_pred(rng, 3, scale)
    a = auc(pred, gt, 0, 50, steps)
    assert 0 <= a <= 1


def test_gaussian_noise_epe_matches_chi3_oracle():
    rng = np.random.default_rng(7)
    sigma = 10.0
    gt, pred = gt_and_pred(rng, 1000, sigma)
    oracle = sigma * np.mean(np.linalg.norm(np.random.default_rng(99).standard_normal((10 ** 6, 3)), axis=1))
    assert abs(oracle - 15.96) < 0.05
    assert abs(epe(pred, gt) - oracle) / oracle < 0.03


def test_report():
    rng = np.random.default_rng(2)
    gt, pred = gt_and_pred(rng, 20, 5.0)
    rep = evaluate_poses(pred, gt)
    assert len(rep.pck_curve) == 100 and rep.pck_curve[0][0] == 0.0 and rep.pck_curve[-1][0] == 50.0
    assert 0 <= rep.auc_0_50 <= 1 and 0 <= rep.auc_20_50 <= 1
    assert rep.n_samples == 20
    assert rep.to_dict()["epe_mm"] == rep.epe_mm


def test_heatmap_loss():
    rng = np.random.default_rng(3)
    T = rng.random((21, 8, 8))
    assert heatmap_loss(np.stack([T] * 4), T) == 0.0
    assert heatmap_loss(np.full((1, 1, 1, 1), 3.0), np.full((1, 1, 1), 1.0)) == 4.0
    H = T + rng.standard_normal((2, 21, 8, 8))
    assert np.isclose(heatmap_loss(T + 2 * (H - T), T), 4 * heatmap_loss(H, T))
    with pytest.raises(DomainError):
        heatmap_loss(np.zeros((21, 8, 8)), T)


def test_mesh_loss():
    P = np.zeros((2, 3))
    Q = P.copy()
    Q[1, 0] = 1
    assert mesh_loss(P, P) == 0.0
    assert mesh_loss(Q, P) == 0.5
    rng = np.random.default_rng(4)
    A, B = rng.standard_normal((10, 3)), rng.standard_normal((10, 3))
    perm = rng.permutation(10)
    assert np.isclose(mesh_loss(A[perm], B[perm]), mesh_loss(A, B))
    with pytest.raises(DomainError):
        mesh_loss(A, B[:9])


def test_depth_loss():
    D = np.linspace(400, 600, 21)
    E = D.copy()
    E[5] += 2
    assert depth_loss(D, D) == 0.0
    assert np.isclose(depth_loss(E, D), 4 / 21)
    assert np.isclose(depth_loss(E + 7, D + 7), depth_loss(E, D))


def test_pose_loss():
    P = np.zeros((21, 3))
    Q = P.copy()
    Q[2] = [0, 3, 4]
    assert pose_loss(P, P) == 0.0
    assert np.isclose(pose_loss(Q, P), 25 / 21)
    assert pose_loss(P, Q) == pose_loss(Q, P)


@given(st.floats(0.1, 10))
@settings(max_examples=30, deadline=None)
def test_losses_degree_two(c):
    rng = np.random.default_rng(5)
    A, B = rng.standard_normal((21, 3)), rng.standard_normal((21, 3))
    for f in (mesh_loss, pose_loss):
        assert np.isclose(f(B + c * (A - B), B), c * c * f(A, B))
        assert f(A, B) >= 0
