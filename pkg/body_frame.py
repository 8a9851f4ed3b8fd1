"""
Body-centered coordinate frames, rotation <-> quaternion conversion and
camera viewpoint (azimuth / elevation) relative to the subject.

Frame construction from pelvis p_p and shoulders p_l, p_r:
    u = (p_l + p_r) / 2 - p_p
    f = (p_l - p_p) x (p_r - p_p)
    r = f x u
after Gram-Schmidt (f first, then u). The body-to-camera rotation is
R = -[r, u, f] (axes as columns), which is the identity for a person
standing upright and facing the camera. Quaternions are (w, x, y, z)
with w >= 0.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

import config
from errors import DegenerateFrameError, NotARotationError, ZeroQuaternionError
from skeleton import L_SHOULDER, PELVIS, R_SHOULDER, Pose

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BodyFrame:
    r: np.ndarray
    u: np.ndarray
    f: np.ndarray
    q: np.ndarray

    @property
    def rotation(self) -> np.ndarray:
        """Body-to-camera rotation -[r, u, f]."""
        return -np.column_stack([self.r, self.u, self.f])


@dataclass(frozen=True)
class Viewpoint:
    azimuth: float  # degrees in (-180, 180]
    elevation: float  # degrees in [-90, 90]

    def to_dict(self) -> Dict[str, float]:
        return {"azimuth_deg": float(self.azimuth), "elevation_deg": float(self.elevation)}


def canonicalize_quaternion(q) -> np.ndarray:
    """Normalize and pick the sign with w > 0 (first nonzero component positive when w = 0)."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if not norm > 0:
        raise ZeroQuaternionError("cannot canonicalize the zero quaternion")
    q = q / norm
    nonzero = np.flatnonzero(q)
    if q[nonzero[0]] < 0:
        q = -q
    return q


def canonicalize_quaternions(Q: np.ndarray) -> np.ndarray:
    """Vectorized canonicalize_quaternion over (N, 4)."""
    Q = np.asarray(Q, dtype=np.float64)
    norms = np.linalg.norm(Q, axis=-1, keepdims=True)
    if np.any(norms <= 0):
        raise ZeroQuaternionError("cannot canonicalize the zero quaternion")
    Q = Q / norms
    first = np.argmax(Q != 0, axis=-1)
    lead = np.take_along_axis(Q, first[..., None], axis=-1)
    return np.where(lead < 0, -Q, Q)


def quaternion_to_rotation(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if not norm > 0:
        raise ZeroQuaternionError("zero quaternion has no rotation")
    if abs(norm - 1.0) > config.QUATERNION_TOLERANCE:
        logger.debug(f"Renormalizing quaternion with norm {norm:.9f}")
    return quaternions_to_rotations((q / norm)[None])[0]


def quaternions_to_rotations(Q: np.ndarray) -> np.ndarray:
    """(N, 4) unit quaternions -> (N, 3, 3) rotation matrices."""
    Q = np.asarray(Q, dtype=np.float64)
    w, x, y, z = Q[..., 0], Q[..., 1], Q[..., 2], Q[..., 3]
    R = np.empty(Q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def _check_rotation(R: np.ndarray):
    if R.shape[-2:] != (3, 3):
        raise NotARotationError(f"expected 3x3 matrices, got shape {R.shape}")
    eye = np.eye(3)
    gram_err = np.abs(np.swapaxes(R, -1, -2) @ R - eye).max(axis=(-2, -1))
    det = np.linalg.det(R)
    bad = (gram_err > config.ROTATION_TOLERANCE) | (np.abs(det - 1.0) > config.ROTATION_TOLERANCE)
    if np.any(bad):
        raise NotARotationError(
            f"{int(np.sum(bad))} matrix(es) not orthonormal with det +1 "
            f"(max |R'R - I| = {float(np.max(gram_err)):.2e})")


def rotations_to_quaternions(R: np.ndarray) -> np.ndarray:
    """(N, 3, 3) rotations -> (N, 4) canonical quaternions.

    Picks the largest of (trace, R00, R11, R22) as pivot so the square root
    never runs close to zero.
    """
    R = np.asarray(R, dtype=np.float64)
    _check_rotation(R)
    m00, m11, m22 = R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]
    trace = m00 + m11 + m22
    pivot = np.argmax(np.stack([trace, m00, m11, m22], axis=-1), axis=-1)
    Q = np.empty(R.shape[:-2] + (4,))

    sel = pivot == 0
    if np.any(sel):
        M = R[sel]
        s = 2.0 * np.sqrt(1.0 + M[:, 0, 0] + M[:, 1, 1] + M[:, 2, 2])
        Q[sel] = np.stack([0.25 * s,
                           (M[:, 2, 1] - M[:, 1, 2]) / s,
                           (M[:, 0, 2] - M[:, 2, 0]) / s,
                           (M[:, 1, 0] - M[:, 0, 1]) / s], axis=-1)
    sel = pivot == 1
    if np.any(sel):
        M = R[sel]
        s = 2.0 * np.sqrt(1.0 + M[:, 0, 0] - M[:, 1, 1] - M[:, 2, 2])
        Q[sel] = np.stack([(M[:, 2, 1] - M[:, 1, 2]) / s,
                           0.25 * s,
                           (M[:, 0, 1] + M[:, 1, 0]) / s,
                           (M[:, 0, 2] + M[:, 2, 0]) / s], axis=-1)
    sel = pivot == 2
    if np.any(sel):
        M = R[sel]
        s = 2.0 * np.sqrt(1.0 - M[:, 0, 0] + M[:, 1, 1] - M[:, 2, 2])
        Q[sel] = np.stack([(M[:, 0, 2] - M[:, 2, 0]) / s,
                           (M[:, 0, 1] + M[:, 1, 0]) / s,
                           0.25 * s,
                           (M[:, 1, 2] + M[:, 2, 1]) / s], axis=-1)
    sel = pivot == 3
    if np.any(sel):
        M = R[sel]
        s = 2.0 * np.sqrt(1.0 - M[:, 0, 0] - M[:, 1, 1] + M[:, 2, 2])
        Q[sel] = np.stack([(M[:, 1, 0] - M[:, 0, 1]) / s,
                           (M[:, 0, 2] + M[:, 2, 0]) / s,
                           (M[:, 1, 2] + M[:, 2, 1]) / s,
                           0.25 * s], axis=-1)
    return canonicalize_quaternions(Q)


def rotation_to_quaternion(R) -> np.ndarray:
    return rotations_to_quaternions(np.asarray(R, dtype=np.float64)[None])[0]


def single_branch_quaternion(r, u, f) -> np.ndarray:
    """Trace-pivot conversion written directly on the body axes.

    q0 = sqrt(1 - r0 - u1 - f2) is the only pivot, so this is singular near
    half-turn rotations; kept as a cross-check of rotation_to_quaternion
    where q0^2 is comfortably positive.
    """
    r, u, f = (np.asarray(v, dtype=np.float64) for v in (r, u, f))
    q0_sq = 1.0 - r[0] - u[1] - f[2]
    if q0_sq <= 0:
        raise NotARotationError("single-pivot conversion is undefined for this rotation")
    q0 = np.sqrt(q0_sq)
    q = np.array([q0 / 2.0,
                  (f[1] - u[2]) / (2.0 * q0),
                  (r[2] - f[0]) / (2.0 * q0),
                  (u[0] - r[1]) / (2.0 * q0)])
    return q / np.linalg.norm(q)


def _frame_axes(joints: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized axes for (N, 14, 3) joints; returns r, u, f and a validity mask."""
    pp = joints[:, PELVIS]
    pl = joints[:, L_SHOULDER]
    pr = joints[:, R_SHOULDER]
    u = (pl + pr) / 2.0 - pp
    f = np.cross(pl - pp, pr - pp)
    area = np.linalg.norm(f, axis=-1) / 2.0
    span_sq = np.sum((pl - pr) ** 2, axis=-1)
    valid = (span_sq > 0) & (area >= config.DEGENERATE_TORSO_RATIO * span_sq)

    f_norm = np.linalg.norm(f, axis=-1, keepdims=True)
    f = f / np.where(f_norm > 0, f_norm, 1.0)
    u = u - np.sum(u * f, axis=-1, keepdims=True) * f
    u_norm = np.linalg.norm(u, axis=-1, keepdims=True)
    valid &= u_norm[:, 0] > 0
    u = u / np.where(u_norm > 0, u_norm, 1.0)
    r = np.cross(f, u)
    return r, u, f, valid


def compute_body_frames(joints: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rotations (N, 3, 3), quaternions (N, 4) and validity mask for (N, 14, 3) joints.

    Rows with a degenerate torso get the identity and valid=False.
    """
    joints = np.asarray(joints, dtype=np.float64)
    r, u, f, valid = _frame_axes(joints)
    R = -np.stack([r, u, f], axis=-1)
    R[~valid] = np.eye(3)
    Q = rotations_to_quaternions(R) if len(R) else np.zeros((0, 4))
    return R, Q, valid


def compute_body_frame(pose: Pose) -> BodyFrame:
    r, u, f, valid = _frame_axes(pose.joints[None])
    if not valid[0]:
        raise DegenerateFrameError("pelvis and shoulders do not span a torso plane")
    R = -np.column_stack([r[0], u[0], f[0]])
    return BodyFrame(r=r[0], u=u[0], f=f[0], q=rotation_to_quaternion(R))


def body_centered(pose: Pose) -> Pose:
    """Root-relative joints expressed in the pose's own body frame."""
    frame = compute_body_frame(pose)
    return Pose((pose.joints - pose.joints[PELVIS]) @ frame.rotation)


def body_centered_joints(joints: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized body_centered; returns (N, 14, 3) and the validity mask."""
    joints = np.asarray(joints, dtype=np.float64)
    R, _, valid = compute_body_frames(joints)
    rooted = joints - joints[:, PELVIS:PELVIS + 1]
    return rooted @ R, valid


def _angles(v_r, v_u, v_f) -> Tuple[np.ndarray, np.ndarray]:
    v_r, v_u, v_f = np.broadcast_arrays(*(np.asarray(a, dtype=np.float64) for a in (v_r, v_u, v_f)))
    pole = np.hypot(v_r, v_f) < 1e-12
    azimuth = np.degrees(np.arctan2(np.where(pole, 0.0, v_r), np.where(pole, 0.0, v_f)))
    azimuth = np.where(azimuth <= -180.0, 180.0, azimuth)
    elevation = np.degrees(np.arcsin(np.clip(v_u, -1.0, 1.0)))
    return azimuth, elevation


def viewpoint_from_frame(frame: BodyFrame, pelvis_cam) -> Viewpoint:
    pelvis_cam = np.asarray(pelvis_cam, dtype=np.float64)
    dist = np.linalg.norm(pelvis_cam)
    if not dist > 0:
        raise DegenerateFrameError("pelvis coincides with the camera center")
    v_cam = -pelvis_cam / dist
    az, el = _angles(frame.r @ v_cam, frame.u @ v_cam, frame.f @ v_cam)
    return Viewpoint(azimuth=float(az), elevation=float(el))


def viewpoints_from_rotations(R: np.ndarray, pelvis_cam: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized viewpoint_from_frame; R = -[r, u, f] as built by compute_body_frames."""
    pelvis_cam = np.asarray(pelvis_cam, dtype=np.float64)
    dist = np.linalg.norm(pelvis_cam, axis=-1, keepdims=True)
    if np.any(dist <= 0):
        raise DegenerateFrameError("pelvis coincides with the camera center")
    v_cam = -pelvis_cam / dist
    # columns of R are -r, -u, -f
    v_body = -np.einsum("nij,ni->nj", R, v_cam)
    return _angles(v_body[:, 0], v_body[:, 1], v_body[:, 2])


def viewpoint_of_pose(pose: Pose) -> Viewpoint:
    return viewpoint_from_frame(compute_body_frame(pose), pose.joints[PELVIS])


def body_view_direction(azimuth_deg, elevation_deg) -> np.ndarray:
    """Components (along r, u, f) of the pelvis-to-camera direction for a viewpoint."""
    az = np.radians(np.asarray(azimuth_deg, dtype=np.float64))
    el = np.radians(np.asarray(elevation_deg, dtype=np.float64))
    return np.stack([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)], axis=-1)
