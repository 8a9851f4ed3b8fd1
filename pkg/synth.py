"""
Synthetic pose + viewpoint generator with per-dataset bias profiles.

Every profile draws body poses from the same pose pool (joint angles within
anatomical ranges, one set of skeleton proportions scaled to the profile's
bone-length target); profiles differ only in where the camera sits relative
to the body (azimuth, elevation, distance) and in the camera intrinsics.

Each sample i is generated from its own generator seeded with
(seed, profile key, i), so output is reproducible and order-independent.
"""

import logging
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
from tqdm import tqdm

import config
from body_frame import body_centered, body_view_direction
from errors import ConfigurationError
from skeleton import JOINT_INDEX, NUM_JOINTS, CameraIntrinsics, Pose, PoseRecord, project_points

logger = logging.getLogger(__name__)


class AzimuthComponent(NamedTuple):
    mean_deg: float
    kappa: float  # von Mises concentration; 0 means uniform
    weight: float


@dataclass(frozen=True)
class BiasProfile:
    name: str
    azimuth: Tuple[AzimuthComponent, ...]
    elevation_mean: float
    elevation_std: float
    distance_mean_m: float
    distance_std_m: float
    focal_mean: float
    focal_std: float
    bone_sum_mean_mm: float
    bone_sum_std_mm: float
    image_size: Tuple[int, int]  # width, height in pixels
    elevation_uniform: bool = False

    def __post_init__(self):
        weights = [c.weight for c in self.azimuth]
        if not self.azimuth or abs(sum(weights) - 1.0) > 1e-9 or min(weights) < 0:
            raise ConfigurationError(f"{self.name}: azimuth mixture weights must be non-negative and sum to 1")
        if min(self.elevation_std, self.distance_std_m, self.focal_std, self.bone_sum_std_mm) < 0:
            raise ConfigurationError(f"{self.name}: standard deviations must be non-negative")
        if self.distance_mean_m <= 0 or self.focal_mean <= 0 or self.bone_sum_mean_mm <= 0:
            raise ConfigurationError(f"{self.name}: distance, focal and bone length must be positive")

    @property
    def key(self) -> int:
        return zlib.crc32(self.name.encode("utf-8"))


@dataclass(frozen=True)
class PosePool:
    """Joint-angle ranges in degrees; shared by every profile unless overridden."""
    spine_lean: Tuple[float, float] = (-10.0, 25.0)
    spine_side: Tuple[float, float] = (-10.0, 10.0)
    head_flex: Tuple[float, float] = (-20.0, 30.0)
    upper_arm_flex: Tuple[float, float] = (-40.0, 150.0)
    upper_arm_abduct: Tuple[float, float] = (0.0, 110.0)
    elbow_flex: Tuple[float, float] = (0.0, 140.0)
    thigh_flex: Tuple[float, float] = (-20.0, 100.0)
    thigh_abduct: Tuple[float, float] = (0.0, 35.0)
    knee_flex: Tuple[float, float] = (0.0, 120.0)


# rest proportions in mm; bone sum 3600 before scaling
SEGMENTS = {
    "spine": 500.0, "neck_head": 200.0, "clavicle": 180.0, "upper_arm": 280.0,
    "forearm": 250.0, "hip": 100.0, "thigh": 430.0, "shin": 420.0,
}
REST_BONE_SUM = (SEGMENTS["spine"] + SEGMENTS["neck_head"] + 2 * SEGMENTS["clavicle"]
                 + 2 * SEGMENTS["upper_arm"] + 2 * SEGMENTS["forearm"] + 2 * SEGMENTS["hip"]
                 + 2 * SEGMENTS["thigh"] + SEGMENTS["shin"])


@dataclass(frozen=True)
class SynthConfig:
    profile: BiasProfile
    count: int
    seed: int = 0
    pose_pool: PosePool = field(default_factory=PosePool)

    def __post_init__(self):
        if self.count < 1:
            raise ConfigurationError(f"count must be at least 1, got {self.count}")


class SynthSample(NamedTuple):
    record: PoseRecord
    azimuth: float
    elevation: float


def builtin_profiles() -> Dict[str, BiasProfile]:
    uniform = (AzimuthComponent(0.0, 0.0, 1.0),)
    profiles = [
        BiasProfile(
            name="h36m-like",
            azimuth=tuple(AzimuthComponent(m, 20.0, 0.25) for m in (-160.0, -30.0, 30.0, 160.0)),
            elevation_mean=10.0, elevation_std=10.0,
            distance_mean_m=5.2, distance_std_m=0.8,
            focal_mean=1146.8, focal_std=2.0,
            bone_sum_mean_mm=3900.0, bone_sum_std_mm=100.0,
            image_size=(1000, 1000),
        ),
        BiasProfile(
            name="gpa-like",
            azimuth=(AzimuthComponent(15.0, 3.0, 0.9), AzimuthComponent(0.0, 0.0, 0.1)),
            elevation_mean=5.0, elevation_std=15.0,
            distance_mean_m=5.1, distance_std_m=1.2,
            focal_mean=1172.4, focal_std=121.3,
            bone_sum_mean_mm=3700.0, bone_sum_std_mm=200.0,
            image_size=(1920, 1080),
        ),
        BiasProfile(
            name="surreal-like",
            azimuth=uniform,
            elevation_mean=0.0, elevation_std=0.0, elevation_uniform=True,
            distance_mean_m=8.0, distance_std_m=1.0,
            focal_mean=600.0, focal_std=0.0,
            bone_sum_mean_mm=3700.0, bone_sum_std_mm=200.0,
            image_size=(320, 240),
        ),
        BiasProfile(
            name="3dpw-like",
            azimuth=(AzimuthComponent(15.0, 6.0, 1.0),),
            elevation_mean=0.0, elevation_std=8.0,
            distance_mean_m=3.5, distance_std_m=0.7,
            focal_mean=1962.2, focal_std=1.5,
            bone_sum_mean_mm=3700.0, bone_sum_std_mm=100.0,
            image_size=(1080, 1920),
        ),
        BiasProfile(
            name="3dhp-like",
            azimuth=(AzimuthComponent(0.0, 0.0, 0.6),) + tuple(
                AzimuthComponent(m, 8.0, 0.1) for m in (-90.0, 0.0, 90.0, 180.0)),
            elevation_mean=15.0, elevation_std=20.0,
            distance_mean_m=3.8, distance_std_m=0.8,
            focal_mean=1497.88, focal_std=2.8,
            bone_sum_mean_mm=3700.0, bone_sum_std_mm=100.0,
            image_size=(2048, 2048),
        ),
    ]
    return {p.name: p for p in profiles}


def get_profile(name: str) -> BiasProfile:
    profiles = builtin_profiles()
    if name not in profiles:
        raise ConfigurationError(f"unknown profile {name!r}; valid profiles: {', '.join(profiles)}")
    return profiles[name]


# Viewpoint and camera sampling

def _wrap_degrees(angle):
    wrapped = np.mod(np.asarray(angle, dtype=np.float64) + 180.0, 360.0) - 180.0
    return np.where(wrapped <= -180.0, 180.0, wrapped)


def _truncated_normal(rng, mean, std, low, high, size):
    if std == 0:
        return np.full(size, float(np.clip(mean, low, high)))
    out = rng.normal(mean, std, size)
    bad = (out < low) | (out > high)
    while np.any(bad):
        out[bad] = rng.normal(mean, std, int(np.sum(bad)))
        bad = (out < low) | (out > high)
    return out


def _draw_azimuth(rng, profile: BiasProfile, size: int) -> np.ndarray:
    weights = np.array([c.weight for c in profile.azimuth])
    which = rng.choice(len(weights), size=size, p=weights)
    out = np.empty(size)
    for i, comp in enumerate(profile.azimuth):
        sel = which == i
        n = int(np.sum(sel))
        if n == 0:
            continue
        if comp.kappa == 0:
            out[sel] = rng.uniform(-180.0, 180.0, n)
        else:
            out[sel] = np.degrees(rng.vonmises(np.radians(comp.mean_deg), comp.kappa, n))
    return _wrap_degrees(out)


def _draw_elevation(rng, profile: BiasProfile, size: int) -> np.ndarray:
    if profile.elevation_uniform:
        return rng.uniform(-90.0, 90.0, size)
    return _truncated_normal(rng, profile.elevation_mean, profile.elevation_std, -90.0, 90.0, size)


def sample_viewpoints(profile: BiasProfile, n: int, seed: int = 0) -> Dict[str, np.ndarray]:
    """Vectorized draw of the profile's viewpoint and camera distributions."""
    rng = np.random.default_rng([seed, profile.key])
    return {
        "azimuth": _draw_azimuth(rng, profile, n),
        "elevation": _draw_elevation(rng, profile, n),
        "distance_m": _truncated_normal(rng, profile.distance_mean_m, profile.distance_std_m,
                                        config.MIN_CAMERA_DISTANCE_M, np.inf, n),
        "focal": _truncated_normal(rng, profile.focal_mean, profile.focal_std, 1.0, np.inf, n),
        "bone_sum_mm": _truncated_normal(rng, profile.bone_sum_mean_mm, profile.bone_sum_std_mm,
                                         0.5 * profile.bone_sum_mean_mm, np.inf, n),
    }


# Pose pool

def _limb_direction(flex_deg: float, abduct_deg: float, side: float) -> np.ndarray:
    """Unit vector from hanging straight down, flexed toward the front and abducted to the side.

    Canonical body coordinates: up = -y, front = -z, subject's left = +x.
    """
    f, a = np.radians(flex_deg), np.radians(abduct_deg)
    return np.array([side * np.sin(a), np.cos(a) * np.cos(f), -np.cos(a) * np.sin(f)])


def _uniform(rng, bounds: Tuple[float, float]) -> float:
    return float(rng.uniform(bounds[0], bounds[1]))


def sample_body_pose(rng: np.random.Generator, pool: PosePool, bone_sum_mm: float) -> Pose:
    """A body-centered pose (frame rotation = identity) with the requested bone-length sum."""
    scale = bone_sum_mm / REST_BONE_SUM
    seg = {k: v * scale for k, v in SEGMENTS.items()}
    J = np.zeros((NUM_JOINTS, 3))
    idx = JOINT_INDEX

    lean, side = np.radians(_uniform(rng, pool.spine_lean)), np.radians(_uniform(rng, pool.spine_side))
    spine_dir = np.array([np.sin(side), -np.cos(lean) * np.cos(side), -np.sin(lean) * np.cos(side)])
    J[idx["neck"]] = seg["spine"] * spine_dir
    left = np.array([1.0, 0.0, 0.0]) - spine_dir[0] * spine_dir
    left /= np.linalg.norm(left)
    J[idx["l_shoulder"]] = J[idx["neck"]] + seg["clavicle"] * left
    J[idx["r_shoulder"]] = J[idx["neck"]] - seg["clavicle"] * left

    head_flex = np.radians(_uniform(rng, pool.head_flex))
    head_dir = np.cos(head_flex) * spine_dir + np.sin(head_flex) * np.array([0.0, 0.0, -1.0])
    J[idx["head"]] = J[idx["neck"]] + seg["neck_head"] * head_dir / np.linalg.norm(head_dir)

    J[idx["l_hip"]] = np.array([seg["hip"], 0.0, 0.0])
    J[idx["r_hip"]] = np.array([-seg["hip"], 0.0, 0.0])

    for prefix, sgn in (("l", 1.0), ("r", -1.0)):
        flex = _uniform(rng, pool.upper_arm_flex)
        abduct = _uniform(rng, pool.upper_arm_abduct)
        elbow = _uniform(rng, pool.elbow_flex)
        shoulder = J[idx[f"{prefix}_shoulder"]]
        J[idx[f"{prefix}_elbow"]] = shoulder + seg["upper_arm"] * _limb_direction(flex, abduct, sgn)
        J[idx[f"{prefix}_wrist"]] = J[idx[f"{prefix}_elbow"]] + seg["forearm"] * _limb_direction(
            flex + elbow, abduct, sgn)

        thigh_flex = _uniform(rng, pool.thigh_flex)
        thigh_abduct = _uniform(rng, pool.thigh_abduct)
        knee = _uniform(rng, pool.knee_flex)
        hip = J[idx[f"{prefix}_hip"]]
        J[idx[f"{prefix}_knee"]] = hip + seg["thigh"] * _limb_direction(thigh_flex, thigh_abduct, sgn)
        if prefix == "l":
            J[idx["l_ankle"]] = J[idx["l_knee"]] + seg["shin"] * _limb_direction(
                thigh_flex - knee, thigh_abduct, sgn)

    return body_centered(Pose(J))


def _orthonormal_basis(primary: np.ndarray, hint: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    a1 = primary / np.linalg.norm(primary)
    a2 = hint - (hint @ a1) * a1
    if np.linalg.norm(a2) < 1e-6:
        a2 = fallback - (fallback @ a1) * a1
    a2 /= np.linalg.norm(a2)
    return np.column_stack([a1, a2, np.cross(a1, a2)])


def place_camera(body_joints: np.ndarray, azimuth: float, elevation: float, distance_mm: float,
                 pelvis_dir: np.ndarray) -> np.ndarray:
    """Camera-frame joints for a body-centered pose seen from the given viewpoint.

    The pelvis lands at distance_mm along pelvis_dir; camera roll keeps the
    body's up direction as close to image-up as the viewpoint allows.
    """
    v = body_view_direction(azimuth, elevation)
    # canonical axes are r = -x, u = -y, f = -z
    to_camera_body = -v
    up = np.array([0.0, -1.0, 0.0])
    front = np.array([0.0, 0.0, -1.0])
    A = _orthonormal_basis(to_camera_body, up, front)
    t = pelvis_dir / np.linalg.norm(pelvis_dir)
    B = _orthonormal_basis(-t, up, np.array([0.0, 0.0, 1.0]))
    M = B @ A.T
    return body_joints @ M.T + distance_mm * t


def _inside_image(kp2d: np.ndarray, width: int, height: int) -> bool:
    return bool(np.all((kp2d[:, 0] >= 0) & (kp2d[:, 0] <= width)
                       & (kp2d[:, 1] >= 0) & (kp2d[:, 1] <= height)))


def generate_sample(profile: BiasProfile, pool: PosePool, seed: int, index: int) -> Tuple[SynthSample, bool]:
    """One sample; the flag is False when it could not be fitted inside the image."""
    rng = np.random.default_rng([seed, profile.key, index])
    width, height = profile.image_size
    for _ in range(config.SYNTH_MAX_RESAMPLE):
        azimuth = float(_draw_azimuth(rng, profile, 1)[0])
        elevation = float(_draw_elevation(rng, profile, 1)[0])
        distance = float(_truncated_normal(rng, profile.distance_mean_m, profile.distance_std_m,
                                           config.MIN_CAMERA_DISTANCE_M, np.inf, 1)[0])
        focal = float(_truncated_normal(rng, profile.focal_mean, profile.focal_std, 1.0, np.inf, 1)[0])
        bone_sum = float(_truncated_normal(rng, profile.bone_sum_mean_mm, profile.bone_sum_std_mm,
                                           0.5 * profile.bone_sum_mean_mm, np.inf, 1)[0])
        jitter = np.radians(rng.uniform(-3.0, 3.0, 2))
        pelvis_dir = np.array([np.tan(jitter[0]), np.tan(jitter[1]), 1.0])

        body = sample_body_pose(rng, pool, bone_sum)
        joints = place_camera(body.joints, azimuth, elevation, distance * 1000.0, pelvis_dir)
        if np.any(joints[:, 2] <= 100.0):
            continue
        K = CameraIntrinsics(focal, focal, width / 2.0, height / 2.0)
        kp2d = project_points(joints, K)
        fits = _inside_image(kp2d, width, height)
        if fits:
            break
    else:
        if np.any(joints[:, 2] <= 100.0):
            raise ConfigurationError(f"{profile.name}: could not place a sample in front of the camera")
    record = PoseRecord(dataset=profile.name, subject=f"synth-{seed}", frame=index,
                        intrinsics=K, pose3d=Pose(joints), pose2d=kp2d)
    return SynthSample(record=record, azimuth=azimuth, elevation=elevation), fits


def generate_samples(cfg: SynthConfig) -> List[SynthSample]:
    samples = []
    outside = 0
    for i in tqdm(range(cfg.count), desc=f"synth {cfg.profile.name}", unit="pose",
                  disable=not config.SHOW_PROGRESS, leave=False):
        sample, fits = generate_sample(cfg.profile, cfg.pose_pool, cfg.seed, i)
        outside += not fits
        samples.append(sample)
    if outside:
        logger.warning(f"⚠️  {outside}/{cfg.count} {cfg.profile.name} samples extend past the image border")
    logger.info(f"🧍 Generated {cfg.count} {cfg.profile.name} samples (seed {cfg.seed})")
    return samples


def generate(cfg: SynthConfig) -> List[PoseRecord]:
    return [s.record for s in generate_samples(cfg)]
