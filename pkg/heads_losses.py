"""
Head mathematics for the pose + viewpoint learner: soft-argmax decoding,
the depth codec, the L1 pose loss, viewpoint classification / regression
losses and the weighted combination, each returning its loss value together
with the analytic gradient.

Viewpoint losses take the raw 4-vector produced by a head; normalization to a
unit, sign-canonical quaternion happens inside and is differentiated through.
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

import numpy as np

import config
from errors import ConfigurationError, ShapeMismatchError
from skeleton import Pose

logger = logging.getLogger(__name__)

MODES = ("C", "R", "C+R")


@dataclass(frozen=True, eq=False)
class HeatmapGrid:
    """Per-joint logits over a D x H x W grid with the coordinate of every cell center."""
    logits: np.ndarray  # (J, D, H, W)
    xs: Optional[np.ndarray] = None  # (W,)
    ys: Optional[np.ndarray] = None  # (H,)
    zs: Optional[np.ndarray] = None  # (D,)

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim == 3:
            logits = logits[None]
        if logits.ndim != 4 or min(logits.shape[1:]) < 1:
            raise ShapeMismatchError(f"heatmap logits must be (J, D, H, W), got {logits.shape}")
        if not np.all(np.isfinite(logits)):
            raise ShapeMismatchError("heatmap logits must be finite")
        _, D, H, W = logits.shape
        object.__setattr__(self, "logits", logits)
        for name, size in (("xs", W), ("ys", H), ("zs", D)):
            axis = getattr(self, name)
            axis = np.arange(size, dtype=np.float64) if axis is None else np.asarray(axis, dtype=np.float64)
            if axis.shape != (size,):
                raise ShapeMismatchError(f"{name} must have {size} entries")
            object.__setattr__(self, name, axis)


@dataclass(frozen=True)
class DepthCodec:
    z_max: float = config.Z_MAX_MM
    bins: int = config.DEPTH_BINS

    def __post_init__(self):
        if not self.z_max > 0:
            raise ConfigurationError(f"z_max must be positive, got {self.z_max}")
        if self.bins < 2:
            raise ConfigurationError(f"depth codec needs at least 2 bins, got {self.bins}")

    @property
    def unit_mm(self) -> float:
        """Millimeters per grid coordinate."""
        return 2.0 * self.z_max / (self.bins - 1)


@dataclass(frozen=True)
class LossWeights:
    lambda_q: float = config.DEFAULT_LAMBDA
    mode: str = config.DEFAULT_MODE
    class_sign: int = config.CLASS_SCORE_SIGN

    def __post_init__(self):
        if not self.lambda_q >= 0:
            raise ConfigurationError(f"lambda_q must be non-negative, got {self.lambda_q}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {', '.join(MODES)}, got {self.mode!r}")
        if self.class_sign not in (1, -1):
            raise ConfigurationError("class_sign must be +1 or -1")

    @property
    def needs_clusters(self) -> bool:
        return "C" in self.mode

    @property
    def uses_classification(self) -> bool:
        return self.lambda_q > 0 and "C" in self.mode

    @property
    def uses_regression(self) -> bool:
        return self.lambda_q > 0 and "R" in self.mode


class LossResult(NamedTuple):
    total: float
    pose: float
    quat: float
    grad_pose: np.ndarray
    grad_q: np.ndarray


# Soft-argmax

def _softmax_flat(logits: np.ndarray) -> np.ndarray:
    flat = logits.reshape(len(logits), -1)
    flat = flat - flat.max(axis=1, keepdims=True)
    p = np.exp(flat)
    p /= p.sum(axis=1, keepdims=True)
    return p.reshape(logits.shape)


def soft_argmax(grid: HeatmapGrid) -> np.ndarray:
    """Expected (x, y, z) cell coordinates per joint, shape (J, 3)."""
    p = _softmax_flat(grid.logits)
    px = p.sum(axis=(1, 2))  # (J, W)
    py = p.sum(axis=(1, 3))  # (J, H)
    pz = p.sum(axis=(2, 3))  # (J, D)
    return np.stack([px @ grid.xs, py @ grid.ys, pz @ grid.zs], axis=-1)


def soft_argmax_backward(grid: HeatmapGrid, grad_coords: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the logits given dL/d(x, y, z) per joint."""
    grad_coords = np.asarray(grad_coords, dtype=np.float64)
    p = _softmax_flat(grid.logits)
    expected = soft_argmax(grid)
    gx, gy, gz = (grad_coords[:, i][:, None, None, None] for i in range(3))
    ex, ey, ez = (expected[:, i][:, None, None, None] for i in range(3))
    centered = (gx * (grid.xs[None, None, None, :] - ex)
                + gy * (grid.ys[None, None, :, None] - ey)
                + gz * (grid.zs[None, :, None, None] - ez))
    return p * centered


# Depth codec

def depth_encode(z, codec: DepthCodec = DepthCodec(), return_clamped: bool = False):
    """(z + z_max) / (2 z_max) * (bins - 1); depths outside +-z_max are clamped."""
    z = np.asarray(z, dtype=np.float64)
    outside = np.abs(z) > codec.z_max
    clamped = int(np.sum(outside))
    if clamped:
        logger.warning(f"⚠️  Clamped {clamped} depth value(s) outside ±{codec.z_max:g} mm")
        z = np.clip(z, -codec.z_max, codec.z_max)
    coords = (z + codec.z_max) / (2.0 * codec.z_max) * (codec.bins - 1)
    coords = float(coords) if coords.ndim == 0 else coords
    return (coords, clamped) if return_clamped else coords


def depth_decode(coord, codec: DepthCodec = DepthCodec()):
    coord = np.asarray(coord, dtype=np.float64)
    z = coord / (codec.bins - 1) * (2.0 * codec.z_max) - codec.z_max
    return float(z) if z.ndim == 0 else z


def depth_quantize(z, codec: DepthCodec = DepthCodec()):
    """Index of the equal-width depth bin (bins over [-z_max, z_max]) holding z."""
    z = np.clip(np.asarray(z, dtype=np.float64), -codec.z_max, codec.z_max)
    idx = np.floor((z + codec.z_max) / (2.0 * codec.z_max) * codec.bins).astype(np.int64)
    idx = np.clip(idx, 0, codec.bins - 1)
    return int(idx) if idx.ndim == 0 else idx


def depth_bin_center(index, codec: DepthCodec = DepthCodec()):
    index = np.asarray(index, dtype=np.float64)
    z = -codec.z_max + (index + 0.5) * (2.0 * codec.z_max / codec.bins)
    return float(z) if z.ndim == 0 else z


# Pose loss

def _joints(pose: Union[Pose, np.ndarray]) -> np.ndarray:
    return pose.joints if isinstance(pose, Pose) else np.asarray(pose, dtype=np.float64)


def pose_loss(pred, target) -> Tuple[float, np.ndarray]:
    """Mean over joints of the L1 norm of the joint error; subgradient 0 at kinks."""
    pred, target = _joints(pred), _joints(target)
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pose shapes differ: {pred.shape} vs {target.shape}")
    diff = pred - target
    J = pred.shape[-2]
    return float(np.abs(diff).sum() / J), np.sign(diff) / J


def pose_loss_batch(pred: np.ndarray, target: np.ndarray) -> Tuple[float, np.ndarray]:
    """Batch mean of pose_loss over (B, J, 3)."""
    if pred.shape != target.shape:
        raise ShapeMismatchError(f"pose shapes differ: {pred.shape} vs {target.shape}")
    B, J = pred.shape[0], pred.shape[1]
    diff = pred - target
    return float(np.abs(diff).sum() / (B * J)), np.sign(diff) / (B * J)


# Quaternion normalization

class NormalizedQuats(NamedTuple):
    q: np.ndarray  # (B, 4) unit, sign-canonical
    sign: np.ndarray  # (B,)
    norm: np.ndarray  # (B,)
    fallback: np.ndarray  # (B,) True where the raw vector was below the epsilon floor


def normalize_quats(V: np.ndarray, eps: float = config.QUAT_EPS) -> NormalizedQuats:
    V = np.asarray(V, dtype=np.float64)
    norm = np.linalg.norm(V, axis=-1)
    fallback = norm < eps
    safe = np.where(fallback, 1.0, norm)
    q = V / safe[:, None]
    first = np.argmax(q != 0, axis=-1)
    lead = np.take_along_axis(q, first[:, None], axis=-1)[:, 0]
    sign = np.where(lead < 0, -1.0, 1.0)
    q = q * sign[:, None]
    q[fallback] = np.array([1.0, 0.0, 0.0, 0.0])
    return NormalizedQuats(q=q, sign=sign, norm=safe, fallback=fallback)


def normalize_quats_backward(nq: NormalizedQuats, grad_q: np.ndarray) -> np.ndarray:
    """Chain rule through q = sign * v / |v|."""
    proj = grad_q - nq.q * np.sum(nq.q * grad_q, axis=-1, keepdims=True)
    dV = nq.sign[:, None] * proj / nq.norm[:, None]
    dV[nq.fallback] = 0.0
    return dV


# Viewpoint losses

def class_loss_batch(V: np.ndarray, c_star: np.ndarray, centers: np.ndarray,
                     sign: int = 1) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean NLL of the target cluster under softmax(sign * mu_c . q); returns (loss, dV, q)."""
    nq = normalize_quats(V)
    c_star = np.asarray(c_star, dtype=np.int64)
    B = len(nq.q)
    if np.any(c_star < 0) or np.any(c_star >= len(centers)):
        raise ShapeMismatchError("cluster index outside [0, k)")
    scores = sign * (nq.q @ centers.T)
    m = scores.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(scores - m).sum(axis=1))
    rows = np.arange(B)
    loss = float(np.sum(lse - scores[rows, c_star]) / B)
    p = np.exp(scores - lse[:, None])
    p[rows, c_star] -= 1.0
    grad_q = sign * (p @ centers) / B
    return loss, normalize_quats_backward(nq, grad_q), nq.q


def reg_loss_batch(V: np.ndarray, q_star: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
    """Mean squared Euclidean distance to the target quaternions; returns (loss, dV, q)."""
    nq = normalize_quats(V)
    B = len(nq.q)
    diff = nq.q - q_star
    loss = float(np.sum(diff * diff) / B)
    return loss, normalize_quats_backward(nq, 2.0 * diff / B), nq.q


def _centers(model) -> np.ndarray:
    return np.asarray(getattr(model, "centers", model), dtype=np.float64)


def viewpoint_class_loss(q_pred, c_star: int, model, sign: int = None) -> Tuple[float, np.ndarray]:
    sign = config.CLASS_SCORE_SIGN if sign is None else sign
    loss, dV, _ = class_loss_batch(np.asarray(q_pred, dtype=np.float64)[None],
                                   np.array([c_star]), _centers(model), sign)
    return loss, dV[0]


def viewpoint_reg_loss(q_pred, q_star) -> Tuple[float, np.ndarray]:
    loss, dV, _ = reg_loss_batch(np.asarray(q_pred, dtype=np.float64)[None],
                                 np.asarray(q_star, dtype=np.float64)[None])
    return loss, dV[0]


def combined_loss_batch(pred_pose: np.ndarray, target_pose: np.ndarray, V: np.ndarray,
                        c_star: Optional[np.ndarray], q_star: Optional[np.ndarray],
                        weights: LossWeights, model=None) -> LossResult:
    """lambda_q * L_q + L_pose over a batch; L_q is classification, regression or both."""
    if weights.needs_clusters and model is None:
        raise ConfigurationError(f"mode {weights.mode} needs a cluster model")
    l_pose, g_pose = pose_loss_batch(pred_pose, target_pose)
    V = np.asarray(V, dtype=np.float64)
    l_q = 0.0
    g_q = np.zeros_like(V)
    if weights.uses_classification:
        if c_star is None:
            raise ConfigurationError("classification mode needs target clusters")
        loss, dV, _ = class_loss_batch(V, c_star, _centers(model), weights.class_sign)
        l_q += loss
        g_q += dV
    if weights.uses_regression:
        if q_star is None:
            raise ConfigurationError("regression mode needs target quaternions")
        loss, dV, _ = reg_loss_batch(V, q_star)
        l_q += loss
        g_q += dV
    if weights.lambda_q > 0:
        g_q *= weights.lambda_q
    total = weights.lambda_q * l_q + l_pose if weights.lambda_q > 0 else l_pose
    return LossResult(total=total, pose=l_pose, quat=l_q, grad_pose=g_pose, grad_q=g_q)


def combined_loss(pred_pose, target_pose, q_pred, c_star: Optional[int], q_star,
                  weights: LossWeights, model=None) -> LossResult:
    result = combined_loss_batch(
        _joints(pred_pose)[None], _joints(target_pose)[None],
        np.asarray(q_pred, dtype=np.float64)[None],
        None if c_star is None else np.array([c_star]),
        None if q_star is None else np.asarray(q_star, dtype=np.float64)[None],
        weights, model)
    return result._replace(grad_pose=result.grad_pose[0], grad_q=result.grad_q[0])
