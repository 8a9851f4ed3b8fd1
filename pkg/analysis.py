"""
Dataset statistics and distribution reports: per-dataset camera / skeleton
statistics, viewpoint histograms, pose-feature export and error broken down
by viewpoint.
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

import config
from body_frame import body_centered_joints, compute_body_frames, viewpoints_from_rotations
from errors import ConfigurationError, ViewBiasError
from skeleton import PELVIS, PoseRecord, bone_length_sums, normalize_skeletons, stack_joints

logger = logging.getLogger(__name__)

STATS_COLUMNS = ("dataset", "count", "distance_mean_m", "distance_std_m", "focal_mean", "focal_std",
                 "bone_sum_mean_m", "bone_sum_std_m")

FEATURE_MODES = ("root-relative", "root-relative+size-normalized",
                 "body-centered", "body-centered+size-normalized")


class RunningStats:
    """Welford single-pass mean / sample variance; shards combine with merge()."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def push(self, value: float):
        self.n += 1
        delta = value - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (value - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        merged = RunningStats()
        merged.n = self.n + other.n
        if merged.n == 0:
            return merged
        delta = other.mean - self.mean
        merged.mean = self.mean + delta * other.n / merged.n
        merged.m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / merged.n
        return merged

    @property
    def std(self) -> float:
        # sample standard deviation; a single value has no spread
        return math.sqrt(self.m2 / (self.n - 1)) if self.n > 1 else 0.0


@dataclass
class DatasetStats:
    dataset: str
    count: int
    distance_mean_m: float
    distance_std_m: float
    focal_mean: float
    focal_std: float
    bone_sum_mean_m: float
    bone_sum_std_m: float

    def row(self) -> List:
        return [getattr(self, c) for c in STATS_COLUMNS]


def compute_stats(records: Sequence[PoseRecord], dataset: str = None) -> DatasetStats:
    if len(records) == 0:
        raise ViewBiasError("cannot compute statistics of an empty record set")
    joints = stack_joints(records)
    distances = np.linalg.norm(joints[:, PELVIS], axis=-1) / 1000.0
    bones = bone_length_sums(joints) / 1000.0
    acc = {"distance": RunningStats(), "focal": RunningStats(), "bone": RunningStats()}
    for rec, dist, bone in zip(records, distances, bones):
        acc["distance"].push(float(dist))
        acc["focal"].push(float(rec.intrinsics.fx))
        acc["bone"].push(float(bone))
    name = dataset if dataset is not None else records[0].dataset
    return DatasetStats(
        dataset=name, count=len(records),
        distance_mean_m=acc["distance"].mean, distance_std_m=acc["distance"].std,
        focal_mean=acc["focal"].mean, focal_std=acc["focal"].std,
        bone_sum_mean_m=acc["bone"].mean, bone_sum_std_m=acc["bone"].std,
    )


# Viewpoint histograms

@dataclass(eq=False)
class ViewHistogram:
    azimuth_edges: np.ndarray
    azimuth_counts: np.ndarray
    elevation_edges: np.ndarray
    elevation_counts: np.ndarray
    joint_counts: Optional[np.ndarray] = None  # (azimuth bins, elevation bins)
    skipped: int = 0

    @property
    def total(self) -> int:
        return int(self.azimuth_counts.sum())


def _bin_index(values: np.ndarray, low: float, high: float, bins: int) -> np.ndarray:
    """Half-open [edge_i, edge_i+1) bins; the upper limit joins the last bin."""
    idx = np.floor((values - low) / (high - low) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def record_viewpoints(records: Sequence[PoseRecord]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Azimuth, elevation (degrees) and a validity mask per record."""
    joints = stack_joints(records)
    R, _, valid = compute_body_frames(joints)
    az, el = viewpoints_from_rotations(R, joints[:, PELVIS]) if len(joints) else (np.zeros(0), np.zeros(0))
    return np.asarray(az), np.asarray(el), valid


def histogram_from_angles(azimuth: np.ndarray, elevation: np.ndarray, az_bins: int = None,
                          el_bins: int = None, joint: bool = False, skipped: int = 0) -> ViewHistogram:
    az_bins = config.AZIMUTH_BINS if az_bins is None else az_bins
    el_bins = config.ELEVATION_BINS if el_bins is None else el_bins
    az_idx = _bin_index(np.asarray(azimuth), -180.0, 180.0, az_bins)
    el_idx = _bin_index(np.asarray(elevation), -90.0, 90.0, el_bins)
    hist = ViewHistogram(
        azimuth_edges=np.linspace(-180.0, 180.0, az_bins + 1),
        azimuth_counts=np.bincount(az_idx, minlength=az_bins),
        elevation_edges=np.linspace(-90.0, 90.0, el_bins + 1),
        elevation_counts=np.bincount(el_idx, minlength=el_bins),
        skipped=skipped,
    )
    if joint:
        grid = np.zeros((az_bins, el_bins), dtype=np.int64)
        np.add.at(grid, (az_idx, el_idx), 1)
        hist.joint_counts = grid
    return hist


def view_histogram(records: Sequence[PoseRecord], az_bins: int = None, el_bins: int = None,
                   joint: bool = False) -> ViewHistogram:
    if len(records) == 0:
        raise ViewBiasError("cannot histogram an empty record set")
    az, el, valid = record_viewpoints(records)
    skipped = int(np.sum(~valid))
    if skipped:
        logger.warning(f"⚠️  Skipped {skipped} record(s) with a degenerate torso frame")
    return histogram_from_angles(az[valid], el[valid], az_bins, el_bins, joint, skipped)


# Pose features

def pose_features(records: Sequence[PoseRecord], mode: str) -> Tuple[np.ndarray, List[str]]:
    """(N, 42) features after the chosen normalization chain, plus dataset tags."""
    if mode not in FEATURE_MODES:
        raise ConfigurationError(f"unknown feature mode {mode!r}; valid modes: {', '.join(FEATURE_MODES)}")
    if len(records) == 0:
        raise ViewBiasError("cannot export features of an empty record set")
    joints = stack_joints(records)
    tags = [r.dataset for r in records]
    if mode.startswith("body-centered"):
        joints, valid = body_centered_joints(joints)
        if not np.all(valid):
            logger.warning(f"⚠️  Skipped {int(np.sum(~valid))} record(s) with a degenerate torso frame")
            joints = joints[valid]
            tags = [t for t, ok in zip(tags, valid) if ok]
    else:
        joints = joints - joints[:, PELVIS:PELVIS + 1]
    if mode.endswith("size-normalized"):
        joints = normalize_skeletons(joints)
    return joints.reshape(len(joints), -1), tags


def export_pose_features(records: Sequence[PoseRecord], mode: str, path: str) -> int:
    features, tags = pose_features(records, mode)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([f"f{i}" for i in range(features.shape[1])] + ["dataset"])
        for row, tag in zip(features, tags):
            writer.writerow([repr(float(v)) for v in row] + [tag])
    logger.info(f"💾 Exported {len(features)} {mode} feature rows to {path}")
    return len(features)


# Error by viewpoint

@dataclass
class BinError:
    axis: str
    bin_start: float
    bin_end: float
    count: int
    mean_error: float


def error_by_viewpoint(errors: Sequence[float], azimuth: Sequence[float], elevation: Sequence[float],
                       az_bins: int = None, el_bins: int = None) -> Dict[str, Dict[int, BinError]]:
    """Mean per-sample error in every azimuth and elevation bin; empty bins are absent."""
    errors = np.asarray(errors, dtype=np.float64)
    if len(errors) == 0:
        raise ViewBiasError("no evaluation samples to bin")
    az_bins = config.AZIMUTH_BINS if az_bins is None else az_bins
    el_bins = config.ELEVATION_BINS if el_bins is None else el_bins
    table: Dict[str, Dict[int, BinError]] = {}
    for axis, values, low, high, bins in (("azimuth", azimuth, -180.0, 180.0, az_bins),
                                          ("elevation", elevation, -90.0, 90.0, el_bins)):
        idx = _bin_index(np.asarray(values, dtype=np.float64), low, high, bins)
        counts = np.bincount(idx, minlength=bins)
        sums = np.bincount(idx, weights=errors, minlength=bins)
        width = (high - low) / bins
        table[axis] = {
            int(b): BinError(axis, low + b * width, low + (b + 1) * width, int(counts[b]),
                             float(sums[b] / counts[b]))
            for b in np.flatnonzero(counts)
        }
    return table


def error_reduction_by_viewpoint(baseline: Mapping[str, Mapping[int, BinError]],
                                 treated: Mapping[str, Mapping[int, BinError]]) -> List[Dict]:
    """baseline - treated for every bin populated in both runs."""
    rows = []
    for axis in baseline:
        for b in sorted(set(baseline[axis]) & set(treated.get(axis, {}))):
            base, treat = baseline[axis][b], treated[axis][b]
            rows.append({"axis": axis, "bin_start": base.bin_start, "bin_end": base.bin_end,
                         "count": base.count, "baseline_mm": base.mean_error,
                         "treated_mm": treat.mean_error, "reduction_mm": base.mean_error - treat.mean_error})
    return rows


def _occurrence_keys(rows: Sequence[Mapping]) -> List[Tuple[str, str, int]]:
    seen: Dict[Tuple[str, str], int] = {}
    keys = []
    for r in rows:
        pair = (r["train_set"], r["test_set"])
        keys.append(pair + (seen.get(pair, 0),))
        seen[pair] = seen.get(pair, 0) + 1
    return keys


def error_reduction(baseline_rows: Sequence[Mapping], treated_rows: Sequence[Mapping],
                    metric: str = "mpjpe_mm") -> Tuple[List[Dict], Dict[str, float]]:
    """Pairs report rows by (train_set, test_set) and their order among rows with
    that pair; returns per-pair reductions and the mean same-dataset and
    cross-dataset reductions."""
    treated = dict(zip(_occurrence_keys(treated_rows), treated_rows))
    rows = []
    for key, base in zip(_occurrence_keys(baseline_rows), baseline_rows):
        if key not in treated:
            logger.warning(f"⚠️  No treated result for {key[0]} -> {key[1]}")
            continue
        b, t = float(base[metric]), float(treated[key][metric])
        rows.append({"train_set": key[0], "test_set": key[1], "same_dataset": key[0] == key[1],
                     "baseline": b, "treated": t, "reduction": b - t,
                     "reduction_pct": 100.0 * (b - t) / b if b else 0.0})
    same = [r["reduction"] for r in rows if r["same_dataset"]]
    cross = [r["reduction"] for r in rows if not r["same_dataset"]]
    summary = {
        "same_dataset_reduction": float(np.mean(same)) if same else float("nan"),
        "cross_dataset_reduction": float(np.mean(cross)) if cross else float("nan"),
    }
    return rows, summary


def paired_seed_effect(rows: Sequence[Mapping], train_sets: Sequence[str], min_win_fraction: float = None,
                       min_reduction: float = None) -> List[Dict]:
    """Treated-vs-baseline effect per test set over seed-paired runs.

    rows carry variant ("baseline" or "treated"), seed, test_set and mpjpe_mm.
    A cross-dataset test set passes when the treated model wins in at least
    min_win_fraction of the pairs, the mean relative reduction reaches
    min_reduction, and every same-dataset MPJPE gap is smaller in magnitude
    than its mean reduction in mm. passed is None for same-dataset sets.
    """
    min_win_fraction = config.CENTRAL_MIN_WIN_FRACTION if min_win_fraction is None else min_win_fraction
    min_reduction = config.CENTRAL_MIN_REDUCTION if min_reduction is None else min_reduction
    effects = []
    for test_set in dict.fromkeys(r["test_set"] for r in rows if r.get("variant") in ("baseline", "treated")):
        base = {r["seed"]: float(r["mpjpe_mm"]) for r in rows
                if r["test_set"] == test_set and r.get("variant") == "baseline"}
        treat = {r["seed"]: float(r["mpjpe_mm"]) for r in rows
                 if r["test_set"] == test_set and r.get("variant") == "treated"}
        seeds = sorted(set(base) & set(treat))
        if not seeds:
            continue
        effects.append({
            "test_set": test_set,
            "same_dataset": test_set in train_sets,
            "pairs": len(seeds),
            "wins": sum(treat[s] < base[s] for s in seeds),
            "wins_needed": int(math.ceil(min_win_fraction * len(seeds) - 1e-9)),
            "relative_reduction": float(np.mean([(base[s] - treat[s]) / base[s] for s in seeds])),
            "reduction_mm": float(np.mean([base[s] - treat[s] for s in seeds])),
        })
    same_gap = max((abs(e["reduction_mm"]) for e in effects if e["same_dataset"]), default=0.0)
    for e in effects:
        e["same_dataset_gap_mm"] = same_gap
        if e["same_dataset"]:
            e["passed"] = None
        else:
            e["passed"] = bool(e["wins"] >= e["wins_needed"] and e["relative_reduction"] >= min_reduction
                               and same_gap < e["reduction_mm"])
    return effects


# CSV writers

def write_stats_csv(stats: Sequence[DatasetStats], path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(STATS_COLUMNS)
        for s in stats:
            writer.writerow(s.row())
    logger.info(f"💾 Wrote statistics for {len(stats)} dataset(s) to {path}")


def write_histogram_csv(edges: np.ndarray, counts: np.ndarray, path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_start", "bin_end", "count"])
        for start, end, count in zip(edges[:-1], edges[1:], counts):
            writer.writerow([float(start), float(end), int(count)])


def write_joint_histogram_csv(hist: ViewHistogram, path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["azimuth_start", "azimuth_end", "elevation_start", "elevation_end", "count"])
        for i in range(len(hist.azimuth_counts)):
            for j in range(len(hist.elevation_counts)):
                writer.writerow([float(hist.azimuth_edges[i]), float(hist.azimuth_edges[i + 1]),
                                 float(hist.elevation_edges[j]), float(hist.elevation_edges[j + 1]),
                                 int(hist.joint_counts[i, j])])


def write_rows_csv(rows: Sequence[Mapping], columns: Sequence[str], path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_view_errors_csv(table: Mapping[str, Mapping[int, BinError]], path: str):
    rows = [vars(e) for axis in table for _, e in sorted(table[axis].items())]
    write_rows_csv(rows, ("axis", "bin_start", "bin_end", "count", "mean_error"), path)
