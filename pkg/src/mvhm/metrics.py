"""Pose error metrics (EPE, PCK, AUC) and the four training losses."""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

PCK_STEPS = 100


@dataclass(frozen=True)
class PoseErrorReport:
    epe_mm: float
    pck_curve: list = field(default_factory=list)    # [(threshold mm, fraction), ...]
    auc_0_50: float = 0.0
    auc_20_50: float = 0.0
    n_samples: int = 0

    def to_dict(self):
        return {"epe_mm": self.epe_mm, "auc_0_50": self.auc_0_50, "auc_20_50": self.auc_20_50,
                "n_samples": self.n_samples, "pck_curve": [list(p) for p in self.pck_curve]}


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.ndim == 2:
        pred = pred[None]
    if gt.ndim == 2:
        gt = gt[None]
    if pred.shape != gt.shape:
        raise DomainError(f"prediction shape {pred.shape} does not match ground truth {gt.shape}")
    if pred.ndim != 3 or pred.shape[1:] != (21, 3):
        raise DomainError(f"expected (n, 21, 3) keypoints, got {pred.shape}")
    return pred, gt


def joint_errors(pred, gt):
    """Euclidean error of every joint, shape (n, 21)."""
    pred, gt = _pair(pred, gt)
    return np.linalg.norm(pred - gt, axis=-1)


def epe(pred, gt):
    return float(joint_errors(pred, gt).mean())


def _pck(err, threshold):
    return float(np.mean(err <= threshold))


def pck(pred, gt, threshold):
    if threshold < 0:
        raise DomainError("threshold must be nonnegative")
    return _pck(joint_errors(pred, gt), threshold)


def pck_curve(err, lo, hi, steps=PCK_STEPS):
    thr = np.linspace(lo, hi, steps)
    e = np.sort(np.ravel(err))
    frac = np.searchsorted(e, thr, side="right") / e.size
    return thr, frac


def _auc(err, lo, hi, steps):
    if not lo < hi or lo < 0:
        raise DomainError("AUC range needs 0 <= lo < hi")
    if steps < 2:
        raise DomainError("AUC needs at least 2 thresholds")
    thr, frac = pck_curve(err, lo, hi, steps)
    area = 0.5 * np.sum((frac[1:] + frac[:-1]) * np.diff(thr))
    # the summed widths can overshoot (hi - lo) by an ulp
    return float(min(1.0, area / (hi - lo)))


def auc(pred, gt, lo, hi, steps=PCK_STEPS):
    """Trapezoid area under PCK on `steps` evenly spaced thresholds in [lo, hi], over (hi - lo)."""
    return _auc(joint_errors(pred, gt), lo, hi, steps)


def evaluate_poses(pred, gt, steps=PCK_STEPS):
    err = joint_errors(pred, gt)
    thr, frac = pck_curve(err, 0.0, 50.0, steps)
    return PoseErrorReport(
        epe_mm=float(err.mean()),
        pck_curve=[(float(t), float(f)) for t, f in zip(thr, frac)],
        auc_0_50=_auc(err, 0.0, 50.0, steps),
        auc_20_50=_auc(err, 20.0, 50.0, steps),
        n_samples=err.shape[0],
    )


def _same(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def heatmap_loss(H, target):
    """Mean over stacks and joints of the squared Frobenius distance; H is (S, K, h, w)."""
    H = np.asarray(H, dtype=float)
    target = np.asarray(target, dtype=float)
    if H.ndim != 4 or H.shape[1:] != target.shape:
        raise DomainError(f"heatmap stack {H.shape} does not match target {target.shape}")
    S, K = H.shape[:2]
    return float(np.sum((H - target[None]) ** 2) / (S * K))


def mesh_loss(P, P_gt):
    P, P_gt = _same(P, P_gt)
    return float(np.sum((P - P_gt) ** 2) / P.shape[0])


def depth_loss(D, D_gt):
    D, D_gt = _same(D, D_gt)
    return float(np.sum((D - D_gt) ** 2) / D.shape[0])


def pose_loss(P, P_gt):
    P, P_gt = _same(P, P_gt)
    return float(np.sum((P - P_gt) ** 2) / P.shape[0])
