"""
Core pose data model: the 14-joint skeleton, root-relative conversion,
bone lengths, skeleton-size normalization, pinhole projection and the
JSONL pose-record format used by every command.

Coordinates are camera-frame millimeters (x right, y down, z forward).
"""

import json
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

import config
from errors import BehindCameraError, DegenerateSkeletonError, InvalidRecordError

logger = logging.getLogger(__name__)

JOINT_NAMES = (
    "pelvis", "neck", "head",
    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow", "l_wrist", "r_wrist",
    "l_hip", "r_hip", "l_knee", "r_knee", "l_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

PELVIS = JOINT_INDEX["pelvis"]
NECK = JOINT_INDEX["neck"]
L_SHOULDER = JOINT_INDEX["l_shoulder"]
R_SHOULDER = JOINT_INDEX["r_shoulder"]
L_HIP = JOINT_INDEX["l_hip"]
R_HIP = JOINT_INDEX["r_hip"]

# parent -> child, rooted at pelvis
BONES = (
    ("pelvis", "neck"), ("neck", "head"),
    ("neck", "l_shoulder"), ("neck", "r_shoulder"),
    ("l_shoulder", "l_elbow"), ("r_shoulder", "r_elbow"),
    ("l_elbow", "l_wrist"), ("r_elbow", "r_wrist"),
    ("pelvis", "l_hip"), ("pelvis", "r_hip"),
    ("l_hip", "l_knee"), ("r_hip", "r_knee"),
    ("l_knee", "l_ankle"),
)
EDGES = tuple((JOINT_INDEX[a], JOINT_INDEX[b]) for a, b in BONES)
_PARENTS = np.array([p for p, _ in EDGES])
_CHILDREN = np.array([c for _, c in EDGES])


@dataclass(frozen=True)
class JointSet:
    names: Tuple[str, ...] = JOINT_NAMES
    edges: Tuple[Tuple[int, int], ...] = EDGES

    def __post_init__(self):
        if len(self.names) != 14 or self.names[0] != "pelvis":
            raise InvalidRecordError("joint set must list 14 joints starting with pelvis")
        if len(self.edges) != len(self.names) - 1:
            raise InvalidRecordError("bone list must be a spanning tree")
        reached = {0}
        pending = list(self.edges)
        while pending:
            progressed = [e for e in pending if e[0] in reached]
            if not progressed:
                raise InvalidRecordError("bone list is not a tree rooted at pelvis")
            for parent, child in progressed:
                reached.add(child)
                pending.remove((parent, child))
        if reached != set(range(len(self.names))):
            raise InvalidRecordError("bone list does not reach every joint")


JOINTS = JointSet()


def _frozen_array(values, shape, what):
    arr = np.array(values, dtype=np.float64)
    if arr.shape != shape:
        raise InvalidRecordError(f"{what} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidRecordError(f"{what} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Pose:
    """14 x 3 joint positions in millimeters."""
    joints: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "joints", _frozen_array(self.joints, (NUM_JOINTS, 3), "joints"))

    @property
    def pelvis(self) -> np.ndarray:
        return self.joints[PELVIS]

    def __eq__(self, other):
        return isinstance(other, Pose) and np.array_equal(self.joints, other.joints)

    __hash__ = None


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        values = (self.fx, self.fy, self.cx, self.cy)
        if not all(np.isfinite(v) for v in values):
            raise InvalidRecordError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidRecordError(f"focal lengths must be positive (fx={self.fx}, fy={self.fy})")

    def to_dict(self) -> Dict[str, float]:
        return {"fx": float(self.fx), "fy": float(self.fy), "cx": float(self.cx), "cy": float(self.cy)}


@dataclass(frozen=True, eq=False)
class PoseRecord:
    """One annotated sample in camera coordinates."""
    dataset: str
    subject: str
    frame: int
    intrinsics: CameraIntrinsics
    pose3d: Pose
    pose2d: Optional[np.ndarray] = None
    pelvis_synthesized: bool = False

    def __post_init__(self):
        if self.pose3d.pelvis[2] <= 0:
            raise InvalidRecordError(
                f"{self.dataset}/{self.subject}/{self.frame}: pelvis depth must be positive")
        if self.pose2d is not None:
            object.__setattr__(self, "pose2d", _frozen_array(self.pose2d, (NUM_JOINTS, 2), "joints2d"))

    def keypoints2d(self) -> np.ndarray:
        """Stored 2D joints, or the projection of the 3D joints when absent."""
        if self.pose2d is not None:
            return self.pose2d
        return project_to_2d(self.pose3d, self.intrinsics)


def root_relative(pose: Pose) -> Pose:
    return Pose(pose.joints - pose.joints[PELVIS])


def bone_vectors(joints: np.ndarray) -> np.ndarray:
    """Child minus parent for every bone; works on (..., 14, 3) arrays."""
    joints = np.asarray(joints, dtype=np.float64)
    return joints[..., _CHILDREN, :] - joints[..., _PARENTS, :]


def bone_lengths(joints: np.ndarray) -> np.ndarray:
    return np.linalg.norm(bone_vectors(joints), axis=-1)


def bone_length_sum(pose: Pose) -> float:
    return float(bone_lengths(pose.joints).sum())


def bone_length_sums(joints: np.ndarray) -> np.ndarray:
    """Vectorized bone_length_sum over (N, 14, 3)."""
    return bone_lengths(joints).sum(axis=-1)


def normalize_skeleton(pose: Pose, target_sum: float = None) -> Pose:
    """Root-relative pose scaled uniformly to the target bone-length sum."""
    if target_sum is None:
        target_sum = config.TARGET_BONE_SUM_MM
    total = bone_length_sum(pose)
    if not total > 0:
        raise DegenerateSkeletonError("skeleton has zero bone length; record is unusable")
    rooted = pose.joints - pose.joints[PELVIS]
    return Pose(rooted * (target_sum / total))


def normalize_skeletons(joints: np.ndarray, target_sum: float = None) -> np.ndarray:
    """Vectorized normalize_skeleton over (N, 14, 3)."""
    if target_sum is None:
        target_sum = config.TARGET_BONE_SUM_MM
    joints = np.asarray(joints, dtype=np.float64)
    totals = bone_length_sums(joints)
    if np.any(totals <= 0):
        raise DegenerateSkeletonError(f"{int(np.sum(totals <= 0))} skeleton(s) have zero bone length")
    rooted = joints - joints[..., PELVIS:PELVIS + 1, :]
    return rooted * (target_sum / totals)[..., None, None]


def project_points(points: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of (..., 3) points to (..., 2) pixels."""
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    if np.any(z <= 0):
        raise BehindCameraError(f"{int(np.sum(z <= 0))} point(s) at or behind the camera plane")
    u = K.fx * points[..., 0] / z + K.cx
    v = K.fy * points[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1)


def project_to_2d(pose: Pose, K: CameraIntrinsics) -> np.ndarray:
    return project_points(pose.joints, K)


def back_project(kp2d: np.ndarray, z: np.ndarray, K: CameraIntrinsics) -> Pose:
    kp2d = np.asarray(kp2d, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if kp2d.shape != (NUM_JOINTS, 2) or z.shape != (NUM_JOINTS,):
        raise InvalidRecordError(f"expected {NUM_JOINTS} keypoints and depths")
    if np.any(z <= 0):
        raise BehindCameraError("back-projection needs positive depths")
    x = (kp2d[:, 0] - K.cx) * z / K.fx
    y = (kp2d[:, 1] - K.cy) * z / K.fy
    return Pose(np.stack([x, y, z], axis=-1))


def stack_joints(records: Sequence[PoseRecord]) -> np.ndarray:
    """(N, 14, 3) camera-frame joints of a record list."""
    if len(records) == 0:
        return np.zeros((0, NUM_JOINTS, 3))
    return np.stack([r.pose3d.joints for r in records])


# JSONL pose-record format

def record_to_dict(record: PoseRecord) -> Dict:
    data = {
        "dataset": record.dataset,
        "subject": record.subject,
        "frame": int(record.frame),
        "intrinsics": record.intrinsics.to_dict(),
        "joints3d": record.pose3d.joints.tolist(),
    }
    if record.pose2d is not None:
        data["joints2d"] = record.pose2d.tolist()
    data["pelvis_synthesized"] = bool(record.pelvis_synthesized)
    return data


def record_from_dict(data: Dict) -> PoseRecord:
    try:
        joints = list(data["joints3d"])
        if len(joints) != NUM_JOINTS:
            raise InvalidRecordError(f"joints3d must list {NUM_JOINTS} joints, got {len(joints)}")
        synthesized = bool(data.get("pelvis_synthesized", False))
        if joints[PELVIS] is None:
            joints[PELVIS] = ((np.asarray(joints[L_HIP], dtype=np.float64)
                               + np.asarray(joints[R_HIP], dtype=np.float64)) / 2.0).tolist()
            synthesized = True
        intr = data["intrinsics"]
        joints2d = data.get("joints2d")
        return PoseRecord(
            dataset=str(data["dataset"]),
            subject=str(data.get("subject", "")),
            frame=int(data.get("frame", 0)),
            intrinsics=CameraIntrinsics(float(intr["fx"]), float(intr["fy"]),
                                        float(intr["cx"]), float(intr["cy"])),
            pose3d=Pose(joints),
            pose2d=None if joints2d is None else np.asarray(joints2d, dtype=np.float64),
            pelvis_synthesized=synthesized,
        )
    except (KeyError, TypeError) as e:
        raise InvalidRecordError(f"malformed pose record: {e}") from e


def write_records(records: Iterable[PoseRecord], path: str) -> int:
    count = 0
    with open(path, "w") as f:
        for record in records:
            f.write(json.dumps(record_to_dict(record), separators=(",", ":")))
            f.write("\n")
            count += 1
    logger.info(f"💾 Wrote {count} records to {path}")
    return count


def read_records(path: str) -> List[PoseRecord]:
    records = []
    with open(path, "r") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(record_from_dict(json.loads(line)))
            except json.JSONDecodeError as e:
                raise InvalidRecordError(f"{path}:{line_no}: invalid JSON ({e})") from e
            except InvalidRecordError as e:
                raise InvalidRecordError(f"{path}:{line_no}: {e}") from e
    logger.debug(f"Loaded {len(records)} records from {path}")
    return records
