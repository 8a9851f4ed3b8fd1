"""
k-means over viewpoint quaternions.

Quaternions are canonicalized (q and -q are the same rotation) before
clustering; distance is Euclidean in R^4 and every centroid is projected back
onto the unit sphere after the mean step.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

import config
from body_frame import (canonicalize_quaternion, canonicalize_quaternions,
                        compute_body_frames, quaternions_to_rotations)
from errors import ClusteringError
from skeleton import PoseRecord, stack_joints

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    centers: np.ndarray  # (k, 4)
    k: int
    seed: int
    scope: str
    inertia: float
    n_iter: int = 0
    inertia_history: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "k": int(self.k),
            "seed": int(self.seed),
            "scope": self.scope,
            "inertia": float(self.inertia),
            "n_iter": int(self.n_iter),
            "centers": self.centers.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ClusterModel":
        try:
            centers = canonicalize_quaternions(np.asarray(data["centers"], dtype=np.float64))
            if centers.ndim != 2 or centers.shape[1] != 4 or len(centers) != int(data["k"]):
                raise ClusteringError("cluster file centers do not match k")
            return cls(centers=centers, k=int(data["k"]), seed=int(data["seed"]),
                       scope=str(data["scope"]), inertia=float(data["inertia"]),
                       n_iter=int(data.get("n_iter", 0)))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ClusteringError):
                raise
            raise ClusteringError(f"malformed cluster model: {e}") from e


def save_model(model: ClusterModel, path: str):
    with open(path, "w") as f:
        json.dump(model.to_dict(), f, indent=2)
    logger.info(f"💾 Saved {model.k}-cluster model ({model.scope}) to {path}")


def load_model(path: str) -> ClusterModel:
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ClusteringError(f"{path}: invalid JSON ({e})") from e
    return ClusterModel.from_dict(data)


def _sq_dist_to(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    diff = points - center
    return np.einsum("ij,ij->i", diff, diff)


def _nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # |x|^2 + |c|^2 - 2 x.c ; argmin keeps the lowest index on ties
    d2 = (np.einsum("ij,ij->i", points, points)[:, None]
          + np.einsum("ij,ij->i", centers, centers)[None, :]
          - 2.0 * points @ centers.T)
    return np.argmin(d2, axis=1)


def _inertia(points: np.ndarray, centers: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centers[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dist_to(points, points[chosen[0]])
    for _ in range(1, k):
        total = d2.sum()
        idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dist_to(points, points[idx]))
    return points[chosen].copy()


def _lloyd(points: np.ndarray, centers: np.ndarray, max_iter: int):
    k = len(centers)
    labels = _nearest(points, centers)
    inertia = _inertia(points, centers, labels)
    history = [inertia]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, points)
        counts = np.bincount(labels, minlength=k)
        empty = np.flatnonzero(counts == 0)
        if len(empty):
            # move empty clusters onto the worst-fit points
            diff = points - centers[labels]
            residual = np.einsum("ij,ij->i", diff, diff)
            order = np.argsort(-residual, kind="stable")
            for c, idx in zip(empty, order):
                sums[c] = points[idx]
            logger.debug(f"Reseeded {len(empty)} empty cluster(s) at iteration {n_iter}")
        centers = canonicalize_quaternions(sums)
        new_labels = _nearest(points, centers)
        new_inertia = _inertia(points, centers, new_labels)
        if new_inertia > inertia + 1e-9 * (1.0 + inertia):
            raise ClusteringError(
                f"inertia increased at iteration {n_iter}: {inertia:.6g} -> {new_inertia:.6g}")
        history.append(new_inertia)
        converged = np.array_equal(new_labels, labels) and not len(empty)
        labels, inertia = new_labels, new_inertia
        if converged:
            break
    return centers, labels, inertia, history, n_iter


def fit_kmeans(quats, k: int, seed: int, n_init: Optional[int] = None,
               max_iter: Optional[int] = None, scope: str = "global") -> ClusterModel:
    """k-means++ seeded Lloyd iterations on canonicalized unit quaternions."""
    n_init = config.KMEANS_N_INIT if n_init is None else n_init
    max_iter = config.KMEANS_MAX_ITER if max_iter is None else max_iter
    if k < 1:
        raise ClusteringError(f"k must be at least 1, got {k}")
    points = canonicalize_quaternions(np.asarray(quats, dtype=np.float64).reshape(-1, 4))
    distinct = len(np.unique(points, axis=0)) if len(points) else 0
    if distinct < k:
        raise ClusteringError(f"only {distinct} distinct quaternions for k={k} clusters")

    rng = np.random.default_rng(seed)
    best = None
    for run in range(max(1, n_init)):
        init = _kmeans_plus_plus(points, k, rng)
        centers, labels, inertia, history, n_iter = _lloyd(points, init, max_iter)
        logger.debug(f"k-means run {run + 1}: inertia {inertia:.6f} after {n_iter} iterations")
        if best is None or inertia < best[2]:
            best = (centers, labels, inertia, history, n_iter)
    centers, _, inertia, history, n_iter = best
    if n_iter >= max_iter:
        logger.warning(f"⚠️  k-means stopped at the {max_iter}-iteration cap")
    logger.info(f"📊 k-means k={k} seed={seed} scope={scope}: inertia {inertia:.4f} ({len(points)} points)")
    return ClusterModel(centers=centers, k=k, seed=seed, scope=scope, inertia=inertia,
                        n_iter=n_iter, inertia_history=history)


def assign(model: ClusterModel, q) -> int:
    q = canonicalize_quaternion(q)
    return int(np.argmin(_sq_dist_to(model.centers, q)))


def assign_many(model: ClusterModel, quats: np.ndarray, chunk: int = 8192) -> np.ndarray:
    points = canonicalize_quaternions(np.asarray(quats, dtype=np.float64).reshape(-1, 4))
    labels = np.empty(len(points), dtype=np.int64)
    for start in range(0, len(points), chunk):
        block = points[start:start + chunk]
        d2 = ((block[:, None, :] - model.centers[None, :, :]) ** 2).sum(axis=-1)
        labels[start:start + chunk] = np.argmin(d2, axis=1)
    return labels


def record_quaternions(records: Sequence[PoseRecord]) -> np.ndarray:
    """Canonical viewpoint quaternions of the records with a valid torso frame."""
    if len(records) == 0:
        return np.zeros((0, 4))
    _, Q, valid = compute_body_frames(stack_joints(records))
    if not np.all(valid):
        logger.warning(f"⚠️  Skipped {int(np.sum(~valid))} record(s) with a degenerate torso frame")
    return Q[valid]


def scope_quaternions(records_by_dataset: Mapping[str, Sequence[PoseRecord]], scope: str) -> np.ndarray:
    if scope == "global":
        names = sorted(records_by_dataset)
    elif scope.startswith("local:"):
        name = scope[len("local:"):]
        if name not in records_by_dataset:
            raise ClusteringError(
                f"scope {scope!r} names no loaded dataset (have: {', '.join(sorted(records_by_dataset))})")
        names = [name]
    else:
        raise ClusteringError(f"scope must be 'global' or 'local:<dataset>', got {scope!r}")
    pooled = [record_quaternions(records_by_dataset[n]) for n in names]
    quats = np.concatenate(pooled) if pooled else np.zeros((0, 4))
    if len(quats) == 0:
        raise ClusteringError(f"scope {scope!r} contains no usable records")
    return quats


def fit_scoped(records_by_dataset: Mapping[str, Sequence[PoseRecord]], k: int, seed: int,
               scope: str = "global", n_init: Optional[int] = None) -> ClusterModel:
    quats = scope_quaternions(records_by_dataset, scope)
    return fit_kmeans(quats, k, seed, n_init=n_init, scope=scope)


def cluster_summary(model: ClusterModel) -> List[Dict]:
    """Azimuth/elevation each center implies for a camera looking down its optical axis at the pelvis."""
    R = quaternions_to_rotations(model.centers)
    # pelvis on the optical axis: v_cam = (0, 0, -1), so v_body = third row of R
    v_r, v_u, v_f = R[:, 2, 0], R[:, 2, 1], R[:, 2, 2]
    az = np.degrees(np.arctan2(v_r, v_f))
    el = np.degrees(np.arcsin(np.clip(v_u, -1.0, 1.0)))
    return [{"cluster": i, "azimuth_deg": float(a), "elevation_deg": float(e),
             "w": float(c[0]), "x": float(c[1]), "y": float(c[2]), "z": float(c[3])}
            for i, (a, e, c) in enumerate(zip(az, el, model.centers))]
