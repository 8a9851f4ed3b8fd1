"""
Evaluation metrics: MPJPE, Procrustes-aligned MPJPE and PCK3D.

Poses are expected root-relative (pelvis at the origin) before MPJPE;
Procrustes alignment is a similarity transform (rotation, uniform scale,
translation) estimated with the SVD of the cross-covariance, with a
reflection fix so the rotation keeps determinant +1.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Union

import numpy as np

import config
from errors import DegenerateSkeletonError, ShapeMismatchError, ViewBiasError
from skeleton import JOINT_NAMES, Pose
from view_cluster import assign_many

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("train_set", "test_set", "count", "mpjpe_mm", "pa_mpjpe_mm",
                  "pck3d", "pck3d_pose", "view_angle_deg", "view_cluster_acc")


class ProcrustesResult(NamedTuple):
    aligned: Pose
    rotation: np.ndarray
    scale: float
    translation: np.ndarray


def _arr(pose: Union[Pose, np.ndarray]) -> np.ndarray:
    return pose.joints if isinstance(pose, Pose) else np.asarray(pose, dtype=np.float64)


def joint_errors(pred, gt) -> np.ndarray:
    """Euclidean error per joint; (..., J)."""
    pred, gt = _arr(pred), _arr(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"pose shapes differ: {pred.shape} vs {gt.shape}")
    return np.linalg.norm(pred - gt, axis=-1)


def mpjpe(pred, gt) -> float:
    return float(joint_errors(pred, gt).mean())


def procrustes_batch(pred: np.ndarray, gt: np.ndarray, with_scale: bool = None, strict: bool = True):
    """Align every pred[i] (J, 3) onto gt[i]; returns aligned, R, s, t.

    Collinear predictions raise, or with strict=False are only translated.
    """
    with_scale = config.PROCRUSTES_SCALE if with_scale is None else with_scale
    X = np.asarray(pred, dtype=np.float64)
    Y = np.asarray(gt, dtype=np.float64)
    if X.shape != Y.shape or X.ndim != 3 or X.shape[-1] != 3:
        raise ShapeMismatchError(f"expected matching (N, J, 3) arrays, got {X.shape} and {Y.shape}")
    mu_x = X.mean(axis=1, keepdims=True)
    mu_y = Y.mean(axis=1, keepdims=True)
    X0, Y0 = X - mu_x, Y - mu_y

    spread = np.linalg.svd(X0, compute_uv=False)  # (N, 3)
    degenerate = spread[:, 1] <= 1e-9 * np.maximum(spread[:, 0], 1e-300)
    if strict and np.any(degenerate):
        raise DegenerateSkeletonError("prediction joints are collinear; alignment is undefined")

    cov = np.einsum("nji,njk->nik", Y0, X0) / X.shape[1]  # sum y x^T
    U, D, Vt = np.linalg.svd(cov)
    S = np.tile(np.eye(3), (len(X), 1, 1))
    S[:, 2, 2] = np.sign(np.linalg.det(U) * np.linalg.det(Vt))
    S[S[:, 2, 2] == 0, 2, 2] = 1.0
    R = U @ S @ Vt
    if with_scale:
        var_x = np.einsum("nij,nij->n", X0, X0) / X.shape[1]
        s = np.einsum("ni,nii->n", D, S) / np.where(degenerate, 1.0, var_x)
    else:
        s = np.ones(len(X))
    R[degenerate] = np.eye(3)
    s = np.where(degenerate, 1.0, s)
    t = mu_y[:, 0] - s[:, None] * np.einsum("nij,nj->ni", R, mu_x[:, 0])
    aligned = s[:, None, None] * np.einsum("nij,nkj->nki", R, X) + t[:, None, :]
    return aligned, R, s, t


def procrustes_align(pred, gt, with_scale: bool = None) -> ProcrustesResult:
    aligned, R, s, t = procrustes_batch(_arr(pred)[None], _arr(gt)[None], with_scale)
    return ProcrustesResult(aligned=Pose(aligned[0]), rotation=R[0], scale=float(s[0]), translation=t[0])


def pa_mpjpe(pred, gt, with_scale: bool = None) -> float:
    return mpjpe(procrustes_align(pred, gt, with_scale).aligned, gt)


def pck3d(preds, gts, threshold: float = None) -> float:
    """Fraction of (sample, joint) pairs with error below the threshold."""
    threshold = config.PCK_THRESHOLD_MM if threshold is None else threshold
    errors = _stacked_errors(preds, gts)
    return float(np.mean(errors < threshold))


def pck3d_pose(preds, gts, threshold: float = None) -> float:
    """Fraction of samples whose MPJPE is below the threshold."""
    threshold = config.PCK_THRESHOLD_MM if threshold is None else threshold
    errors = _stacked_errors(preds, gts)
    return float(np.mean(errors.mean(axis=1) < threshold))


def _stacked_errors(preds, gts) -> np.ndarray:
    preds = np.asarray([_arr(p) for p in preds]) if isinstance(preds, (list, tuple)) else np.asarray(preds)
    gts = np.asarray([_arr(g) for g in gts]) if isinstance(gts, (list, tuple)) else np.asarray(gts)
    if len(preds) != len(gts):
        raise ShapeMismatchError(f"{len(preds)} predictions for {len(gts)} ground-truth poses")
    if len(preds) == 0:
        raise ViewBiasError("PCK3D of an empty set is undefined")
    return joint_errors(preds, gts)


def viewpoint_error(q_pred: np.ndarray, q_true: np.ndarray, model=None) -> Dict[str, float]:
    """Mean rotation angle between predicted and true viewpoints, and cluster agreement."""
    q_pred = np.asarray(q_pred, dtype=np.float64)
    q_true = np.asarray(q_true, dtype=np.float64)
    dots = np.clip(np.abs(np.sum(q_pred * q_true, axis=-1)), 0.0, 1.0)
    result = {"view_angle_deg": float(np.degrees(2.0 * np.arccos(dots)).mean())}
    if model is not None:
        result["view_cluster_acc"] = float(np.mean(assign_many(model, q_pred) == assign_many(model, q_true)))
    return result


@dataclass
class EvalReport:
    mpjpe_mm: float
    pa_mpjpe_mm: float
    pck3d: float
    count: int
    per_joint_mm: Dict[str, float] = field(default_factory=dict)
    pck3d_pose: Optional[float] = None
    view_angle_deg: Optional[float] = None
    view_cluster_acc: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "count": self.count,
            "mpjpe_mm": self.mpjpe_mm,
            "pa_mpjpe_mm": self.pa_mpjpe_mm,
            "pck3d": self.pck3d,
            "pck3d_pose": self.pck3d_pose,
            "view_angle_deg": self.view_angle_deg,
            "view_cluster_acc": self.view_cluster_acc,
            "per_joint_mm": dict(self.per_joint_mm),
        }

    def csv_row(self, train_set: str, test_set: str) -> List:
        values = {"train_set": train_set, "test_set": test_set, **self.to_dict()}
        return ["" if values[c] is None else values[c] for c in REPORT_COLUMNS]


def evaluate_poses(preds: np.ndarray, gts: np.ndarray, threshold: float = None,
                   with_scale: bool = None) -> EvalReport:
    """Report over (N, 14, 3) root-relative predictions and ground truth."""
    preds = np.asarray(preds, dtype=np.float64)
    gts = np.asarray(gts, dtype=np.float64)
    errors = _stacked_errors(preds, gts)
    aligned, _, _, _ = procrustes_batch(preds, gts, with_scale, strict=False)
    pa_errors = joint_errors(aligned, gts)
    per_joint = errors.mean(axis=0)
    report = EvalReport(
        mpjpe_mm=float(errors.mean()),
        pa_mpjpe_mm=float(pa_errors.mean()),
        pck3d=pck3d(preds, gts, threshold),
        pck3d_pose=pck3d_pose(preds, gts, threshold),
        count=len(preds),
        per_joint_mm={name: float(v) for name, v in zip(JOINT_NAMES, per_joint)},
    )
    if report.pa_mpjpe_mm > report.mpjpe_mm + 1e-9:
        logger.debug(f"PA-MPJPE {report.pa_mpjpe_mm:.3f} exceeds MPJPE {report.mpjpe_mm:.3f}")
    return report
