"""
Configuration file for the viewbias toolkit
Modify these settings (or set VIEWBIAS_<NAME> in the environment / .env file)
to customize geometry, clustering, training and reporting defaults
"""

import os

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


def _env_str(name, default):
    return os.getenv(f"VIEWBIAS_{name}", default)


def _env_int(name, default):
    value = os.getenv(f"VIEWBIAS_{name}")
    return int(value) if value not in (None, "") else default


def _env_float(name, default):
    value = os.getenv(f"VIEWBIAS_{name}")
    return float(value) if value not in (None, "") else default


def _env_bool(name, default):
    value = os.getenv(f"VIEWBIAS_{name}")
    if value in (None, ""):
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


def _env_ints(name, default):
    value = os.getenv(f"VIEWBIAS_{name}")
    if value in (None, ""):
        return default
    return tuple(int(v) for v in value.split(",") if v.strip())


# Skeleton
TARGET_BONE_SUM_MM = _env_float("TARGET_BONE_SUM_MM", 3700.0)  # common skeleton size

# Body frame
DEGENERATE_TORSO_RATIO = 1e-6  # torso triangle area / squared shoulder span
ROTATION_TOLERANCE = 1e-6  # orthonormality check for rotation matrices
QUATERNION_TOLERANCE = 1e-6  # unit-norm check before renormalization

# Viewpoint clustering
DEFAULT_K = _env_int("DEFAULT_K", 100)
KMEANS_MAX_ITER = _env_int("KMEANS_MAX_ITER", 300)
KMEANS_N_INIT = _env_int("KMEANS_N_INIT", 1)
KMEANS_RESTARTS = _env_int("KMEANS_RESTARTS", 4)  # ablation: repeated k-means seeds

# Heads and losses
Z_MAX_MM = _env_float("Z_MAX_MM", 2400.0)
DEPTH_BINS = _env_int("DEPTH_BINS", 64)
DEFAULT_LAMBDA = _env_float("DEFAULT_LAMBDA", 0.5)
DEFAULT_MODE = _env_str("DEFAULT_MODE", "C")  # C, R or C+R
CLASS_SCORE_SIGN = _env_int("CLASS_SCORE_SIGN", 1)  # -1 reproduces exp(-mu'q)
QUAT_EPS = 1e-8

# Metrics
PCK_THRESHOLD_MM = _env_float("PCK_THRESHOLD_MM", 150.0)
PROCRUSTES_SCALE = _env_bool("PROCRUSTES_SCALE", True)  # False = rigid alignment

# Toy network / training
HIDDEN_SIZES = _env_ints("HIDDEN_SIZES", (256, 256))
LEARNING_RATE = _env_float("LEARNING_RATE", 1e-3)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
BATCH_SIZE = _env_int("BATCH_SIZE", 128)
EPOCHS = _env_int("EPOCHS", 25)
LR_DECAY_FRACTION = 0.68  # x0.1 at epoch floor(0.68 * epochs), i.e. 17 of 25
LR_DECAY_FACTOR = 0.1
CANONICAL_WEIGHT = 1.0  # third-head loss weight when enabled

# Dataset-origin probe
PROBE_HIDDEN = _env_ints("PROBE_HIDDEN", (64, 64))
PROBE_EPOCHS = _env_int("PROBE_EPOCHS", 60)
PROBE_TEST_FRACTION = 0.25

# Analysis
AZIMUTH_BINS = _env_int("AZIMUTH_BINS", 36)
ELEVATION_BINS = _env_int("ELEVATION_BINS", 18)

# Ablation
ABLATION_KS = _env_ints("ABLATION_KS", (10, 24, 50, 100, 200, 500))
CENTRAL_PAIRS = _env_int("CENTRAL_PAIRS", 5)
CENTRAL_MIN_WIN_FRACTION = 0.8  # treated must win at least 4 of 5 seed pairs
CENTRAL_MIN_REDUCTION = 0.03  # mean relative cross-dataset MPJPE reduction
RESTART_MAX_SPREAD = 0.05  # k-means restart std / mean of test MPJPE

# Synthetic data
SYNTH_MAX_RESAMPLE = 50  # attempts to keep all joints inside the image
MIN_CAMERA_DISTANCE_M = 1.5

# Logging
LOG_LEVEL = _env_str("LOG_LEVEL", "INFO")  # DEBUG, INFO, WARNING, ERROR
LOG_FORMAT = "[%(levelname)s] %(message)s"
LOG_FILE_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"
LOG_DIR = _env_str("LOG_DIR", "logs")
LOG_TIMEZONE = _env_str("LOG_TIMEZONE", "US/Mountain")
SHOW_PROGRESS = _env_bool("SHOW_PROGRESS", True)
