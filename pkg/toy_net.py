"""
Small numpy multi-task network: normalized 2D keypoints in, root-relative 3D
pose and a viewpoint quaternion out, trained with the combined pose +
viewpoint loss. Also holds the dataset-origin probe, a plain MLP classifier
over pose features.

Pose outputs live in depth-codec units (DepthCodec.unit_mm millimeters per
unit); ToyNet.predict converts back to millimeters.
"""

import csv
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

import config
from body_frame import body_centered_joints, compute_body_frames
from errors import ConfigurationError, ShapeMismatchError, TrainingDivergedError, ViewBiasError
from heads_losses import DepthCodec, LossWeights, combined_loss_batch, normalize_quats, pose_loss_batch
from metrics import EvalReport, evaluate_poses, viewpoint_error
from skeleton import NUM_JOINTS, PELVIS, PoseRecord, normalize_skeletons, stack_joints
from view_cluster import ClusterModel, assign_many

logger = logging.getLogger(__name__)

INPUT_SIZE = NUM_JOINTS * 2
POSE_SIZE = NUM_JOINTS * 3


# Network

@dataclass(eq=False)
class ToyNet:
    input_size: int
    hidden: Tuple[int, ...]
    params: Dict[str, np.ndarray]
    third_head: bool = False
    seed: int = 0
    codec: DepthCodec = field(default_factory=DepthCodec)

    @property
    def head_sizes(self) -> Dict[str, int]:
        heads = {"pose": POSE_SIZE, "quat": 4}
        if self.third_head:
            heads["canonical"] = POSE_SIZE
        return heads

    def param_names(self) -> List[str]:
        names = []
        for i in range(len(self.hidden)):
            names += [f"trunk.{i}.W", f"trunk.{i}.b"]
        for head in self.head_sizes:
            names += [f"{head}.W", f"{head}.b"]
        return names

    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[n].ravel() for n in self.param_names()])

    def load_flat(self, flat: np.ndarray):
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        for name in self.param_names():
            size = self.params[name].size
            if offset + size > len(flat):
                raise ShapeMismatchError("flat parameter vector is too short for this architecture")
            self.params[name] = flat[offset:offset + size].reshape(self.params[name].shape).copy()
            offset += size
        if offset != len(flat):
            raise ShapeMismatchError("flat parameter vector is too long for this architecture")

    def copy(self) -> "ToyNet":
        return ToyNet(self.input_size, tuple(self.hidden), {k: v.copy() for k, v in self.params.items()},
                      self.third_head, self.seed, self.codec)

    def predict(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Root-relative poses in mm (N, 14, 3) and unit quaternions (N, 4)."""
        out = forward(self, x)
        return out.pose * self.codec.unit_mm, out.q


def _dense_init(rng, fan_in: int, fan_out: int) -> Tuple[np.ndarray, np.ndarray]:
    # He initialization for ReLU layers
    return rng.normal(0.0, math.sqrt(2.0 / fan_in), (fan_in, fan_out)), np.zeros(fan_out)


def init_net(hidden: Sequence[int] = None, seed: int = 0, third_head: bool = False,
             input_size: int = INPUT_SIZE, codec: DepthCodec = None) -> ToyNet:
    hidden = tuple(config.HIDDEN_SIZES if hidden is None else hidden)
    if not hidden or min(hidden) < 1:
        raise ConfigurationError(f"hidden layer sizes must be positive, got {hidden}")
    rng = np.random.default_rng(seed)
    net = ToyNet(input_size, hidden, {}, third_head, seed, codec or DepthCodec())
    fan_in = input_size
    for i, width in enumerate(hidden):
        net.params[f"trunk.{i}.W"], net.params[f"trunk.{i}.b"] = _dense_init(rng, fan_in, width)
        fan_in = width
    for head, size in net.head_sizes.items():
        net.params[f"{head}.W"], net.params[f"{head}.b"] = _dense_init(rng, fan_in, size)
    return net


class ForwardOutput(NamedTuple):
    pose: np.ndarray  # (B, 14, 3) codec units
    q: np.ndarray  # (B, 4) unit, w >= 0
    raw_q: np.ndarray  # (B, 4) head output before normalization
    canonical: Optional[np.ndarray]  # (B, 14, 3) codec units or None
    cache: Dict


def _trunk_forward(params: Mapping[str, np.ndarray], x: np.ndarray, depth: int):
    activations = [x]
    pre = []
    h = x
    for i in range(depth):
        z = h @ params[f"trunk.{i}.W"] + params[f"trunk.{i}.b"]
        h = np.maximum(z, 0.0)
        pre.append(z)
        activations.append(h)
    return h, {"activations": activations, "pre": pre}


def _trunk_backward(params: Mapping[str, np.ndarray], cache: Dict, dh: np.ndarray,
                    grads: Dict[str, np.ndarray]):
    for i in reversed(range(len(cache["pre"]))):
        dz = dh * (cache["pre"][i] > 0)
        grads[f"trunk.{i}.W"] = cache["activations"][i].T @ dz
        grads[f"trunk.{i}.b"] = dz.sum(axis=0)
        dh = dz @ params[f"trunk.{i}.W"].T


def _check_input(net: ToyNet, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != net.input_size:
        raise ShapeMismatchError(f"network expects (N, {net.input_size}) inputs, got {x.shape}")
    return x


def forward(net: ToyNet, x: np.ndarray) -> ForwardOutput:
    x = _check_input(net, x)
    h, cache = _trunk_forward(net.params, x, len(net.hidden))
    pose = h @ net.params["pose.W"] + net.params["pose.b"]
    raw_q = h @ net.params["quat.W"] + net.params["quat.b"]
    canonical = None
    if net.third_head:
        canonical = (h @ net.params["canonical.W"] + net.params["canonical.b"]).reshape(-1, NUM_JOINTS, 3)
    cache["h"] = h
    return ForwardOutput(pose=pose.reshape(-1, NUM_JOINTS, 3), q=normalize_quats(raw_q).q,
                         raw_q=raw_q, canonical=canonical, cache=cache)


class Batch(NamedTuple):
    x: np.ndarray  # (B, 28)
    pose: np.ndarray  # (B, 14, 3) codec units
    q_star: np.ndarray  # (B, 4)
    c_star: Optional[np.ndarray] = None  # (B,)
    canonical: Optional[np.ndarray] = None  # (B, 14, 3) codec units


class StepResult(NamedTuple):
    loss: float
    pose_loss: float
    quat_loss: float
    canonical_loss: float
    grads: Dict[str, np.ndarray]


def backward(net: ToyNet, batch: Batch, weights: LossWeights, model: ClusterModel = None,
             canonical_weight: float = None) -> StepResult:
    """Combined loss over the batch and its exact gradient for every parameter."""
    canonical_weight = config.CANONICAL_WEIGHT if canonical_weight is None else canonical_weight
    out = forward(net, batch.x)
    result = combined_loss_batch(out.pose, batch.pose, out.raw_q, batch.c_star, batch.q_star, weights, model)
    h = out.cache["h"]
    grads: Dict[str, np.ndarray] = {}

    d_pose = result.grad_pose.reshape(len(h), POSE_SIZE)
    grads["pose.W"] = h.T @ d_pose
    grads["pose.b"] = d_pose.sum(axis=0)
    grads["quat.W"] = h.T @ result.grad_q
    grads["quat.b"] = result.grad_q.sum(axis=0)
    dh = d_pose @ net.params["pose.W"].T + result.grad_q @ net.params["quat.W"].T

    canonical_loss = 0.0
    total = result.total
    if net.third_head:
        if batch.canonical is None:
            raise ConfigurationError("the canonical-pose head needs canonical targets")
        canonical_loss, g_can = pose_loss_batch(out.canonical, batch.canonical)
        d_can = canonical_weight * g_can.reshape(len(h), POSE_SIZE)
        grads["canonical.W"] = h.T @ d_can
        grads["canonical.b"] = d_can.sum(axis=0)
        dh = dh + d_can @ net.params["canonical.W"].T
        total += canonical_weight * canonical_loss

    _trunk_backward(net.params, out.cache, dh, grads)
    return StepResult(loss=total, pose_loss=result.pose, quat_loss=result.quat,
                      canonical_loss=canonical_loss, grads=grads)


# Optimizer

class Adam:
    def __init__(self, lr: float = None, beta1: float = None, beta2: float = None, eps: float = None):
        self.lr = config.LEARNING_RATE if lr is None else lr
        self.beta1 = config.ADAM_BETA1 if beta1 is None else beta1
        self.beta2 = config.ADAM_BETA2 if beta2 is None else beta2
        self.eps = config.ADAM_EPS if eps is None else eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in sorted(grads):
            g = grads[name]
            m = self.m.get(name, np.zeros_like(g))
            v = self.v.get(name, np.zeros_like(g))
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * v + (1.0 - self.beta2) * g * g
            self.m[name], self.v[name] = m, v
            params[name] = params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# Data preparation

@dataclass
class TrainConfig:
    lr: float = config.LEARNING_RATE
    beta1: float = config.ADAM_BETA1
    beta2: float = config.ADAM_BETA2
    eps: float = config.ADAM_EPS
    batch_size: int = config.BATCH_SIZE
    epochs: int = config.EPOCHS
    decay_fractions: Tuple[float, ...] = (config.LR_DECAY_FRACTION,)
    decay_factor: float = config.LR_DECAY_FACTOR
    weights: LossWeights = field(default_factory=LossWeights)
    canonical_weight: float = config.CANONICAL_WEIGHT
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be at least 1, got {self.epochs}")
        self.decay_fractions = tuple(sorted(self.decay_fractions))
        if any(not 0 < f <= 1 for f in self.decay_fractions):
            raise ConfigurationError(f"decay fractions must lie in (0, 1], got {self.decay_fractions}")

    @property
    def decay_epochs(self) -> List[int]:
        return [int(math.floor(f * self.epochs)) for f in self.decay_fractions]

    @property
    def decay_epoch(self) -> int:
        return self.decay_epochs[0] if self.decay_epochs else self.epochs

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 0-based epoch index; decay_factor applies once per milestone passed."""
        return self.lr * self.decay_factor ** sum(epoch >= e for e in self.decay_epochs)

    def to_dict(self) -> Dict:
        return asdict(self)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")).hexdigest()


@dataclass(eq=False)
class TrainingSet:
    x: np.ndarray  # (N, 28)
    pose_mm: np.ndarray  # (N, 14, 3) root-relative, camera frame
    q_star: np.ndarray  # (N, 4)
    canonical_mm: np.ndarray  # (N, 14, 3) body-centered
    c_star: Optional[np.ndarray] = None
    datasets: List[str] = field(default_factory=list)

    def __len__(self):
        return len(self.x)

    def batch(self, idx: np.ndarray, codec: DepthCodec) -> Batch:
        return Batch(x=self.x[idx], pose=self.pose_mm[idx] / codec.unit_mm, q_star=self.q_star[idx],
                     c_star=None if self.c_star is None else self.c_star[idx],
                     canonical=self.canonical_mm[idx] / codec.unit_mm)


def normalize_keypoints(records: Sequence[PoseRecord]) -> np.ndarray:
    """Keypoints as pelvis-centered normalized image rays scaled into [-1, 1]; (N, 28)."""
    out = np.empty((len(records), INPUT_SIZE))
    for i, rec in enumerate(records):
        K = rec.intrinsics
        kp = rec.keypoints2d()
        rays = np.column_stack([(kp[:, 0] - K.cx) / K.fx, (kp[:, 1] - K.cy) / K.fy])
        rays = rays - rays[PELVIS]
        extent = np.abs(rays).max()
        out[i] = (rays / extent if extent > 0 else rays).ravel()
    return out


def prepare_dataset(records: Sequence[PoseRecord], model: ClusterModel = None) -> TrainingSet:
    """Inputs and targets for every record with a valid torso frame."""
    if len(records) == 0:
        raise ViewBiasError("no records to prepare")
    joints = stack_joints(records)
    _, Q, valid = compute_body_frames(joints)
    if not np.all(valid):
        logger.warning(f"⚠️  Dropping {int(np.sum(~valid))} record(s) with a degenerate torso frame")
    kept = [r for r, ok in zip(records, valid) if ok]
    if not kept:
        raise ViewBiasError("every record has a degenerate torso frame")
    joints = joints[valid]
    canonical, _ = body_centered_joints(joints)
    data = TrainingSet(
        x=normalize_keypoints(kept),
        pose_mm=joints - joints[:, PELVIS:PELVIS + 1],
        q_star=Q[valid],
        canonical_mm=canonical,
        datasets=[r.dataset for r in kept],
    )
    if model is not None:
        data.c_star = assign_many(model, data.q_star)
    return data


# Training

class EpochLoss(NamedTuple):
    epoch: int
    loss: float
    pose_loss: float
    quat_loss: float


class TrainResult(NamedTuple):
    net: ToyNet
    curve: List[EpochLoss]


def train_step(net: ToyNet, batch: Batch, cfg: TrainConfig, optimizer: Adam,
               model: ClusterModel = None) -> StepResult:
    step = backward(net, batch, cfg.weights, model, cfg.canonical_weight)
    if not np.isfinite(step.loss):
        raise TrainingDivergedError(
            f"loss became {step.loss} at optimizer step {optimizer.t + 1} "
            f"(pose {step.pose_loss:.4g}, viewpoint {step.quat_loss:.4g}); try a lower learning rate")
    optimizer.step(net.params, step.grads)
    return step


def train(net: ToyNet, data, cfg: TrainConfig, model: ClusterModel = None) -> TrainResult:
    """Mini-batch Adam with a fixed-seed shuffle; returns the net and per-epoch mean losses."""
    if not isinstance(data, TrainingSet):
        data = prepare_dataset(data, model)
    if len(data) == 0:
        raise ViewBiasError("training set is empty")
    if cfg.weights.needs_clusters:
        if model is None:
            raise ConfigurationError(f"mode {cfg.weights.mode} needs a cluster model")
        if data.c_star is None:
            data.c_star = assign_many(model, data.q_star)

    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    curve: List[EpochLoss] = []
    progress = tqdm(range(cfg.epochs), desc="train", unit="epoch", disable=not config.SHOW_PROGRESS)
    for epoch in progress:
        optimizer.lr = cfg.lr_at(epoch)
        order = rng.permutation(len(data))
        sums = np.zeros(3)
        for start in range(0, len(data), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            step = train_step(net, data.batch(idx, net.codec), cfg, optimizer, model)
            sums += len(idx) * np.array([step.loss, step.pose_loss, step.quat_loss])
        mean = sums / len(data)
        curve.append(EpochLoss(epoch + 1, float(mean[0]), float(mean[1]), float(mean[2])))
        progress.set_postfix(loss=f"{mean[0]:.4f}")
        logger.debug(f"epoch {epoch + 1}: loss {mean[0]:.5f} (pose {mean[1]:.5f}, viewpoint {mean[2]:.5f})")
    logger.info(f"✅ Trained {cfg.epochs} epochs on {len(data)} samples: "
                f"loss {curve[0].loss:.4f} -> {curve[-1].loss:.4f}")
    return TrainResult(net=net, curve=curve)


def write_loss_curve(curve: Sequence[EpochLoss], path: str):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "loss", "L_pose", "L_q"])
        for row in curve:
            writer.writerow([row.epoch, repr(row.loss), repr(row.pose_loss), repr(row.quat_loss)])


# Evaluation

def evaluate(net: ToyNet, data, model: ClusterModel = None) -> EvalReport:
    if not isinstance(data, TrainingSet):
        data = prepare_dataset(data)
    preds, q_pred = net.predict(data.x)
    report = evaluate_poses(preds, data.pose_mm)
    view = viewpoint_error(q_pred, data.q_star, model)
    report.view_angle_deg = view["view_angle_deg"]
    report.view_cluster_acc = view.get("view_cluster_acc")
    return report


# Checkpoints

def save_checkpoint(net: ToyNet, path: str, cfg: TrainConfig = None, extra: Mapping = None):
    payload = {
        "input_size": net.input_size,
        "hidden": list(net.hidden),
        "third_head": net.third_head,
        "seed": net.seed,
        "z_max": net.codec.z_max,
        "bins": net.codec.bins,
        "params": net.flat_params().tolist(),
        "config": cfg.to_dict() if cfg else None,
        "config_hash": cfg.hash() if cfg else None,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f)
    logger.info(f"💾 Saved checkpoint to {path}")


def load_checkpoint(path: str) -> Tuple[ToyNet, Dict]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
        net = init_net(payload["hidden"], payload.get("seed", 0), payload.get("third_head", False),
                       payload["input_size"], DepthCodec(payload["z_max"], payload["bins"]))
        net.load_flat(np.asarray(payload["params"], dtype=np.float64))
    except (KeyError, TypeError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"{path}: not a valid checkpoint ({e})") from e
    if not np.all(np.isfinite(net.flat_params())):
        raise ConfigurationError(f"{path}: checkpoint holds non-finite parameters")
    return net, payload


# Dataset-origin probe

class ProbeResult(NamedTuple):
    accuracy: float
    chance: float
    n_train: int
    n_test: int
    labels: List[str]


def probe_features(records: Sequence[PoseRecord], normalize: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Flattened pose features and the validity mask.

    normalize=False: root-relative camera-frame joints.
    normalize=True: body-centered joints scaled to the common bone-length sum.
    """
    joints = stack_joints(records)
    if normalize:
        feats, valid = body_centered_joints(joints)
        feats[valid] = normalize_skeletons(feats[valid])
    else:
        feats = joints - joints[:, PELVIS:PELVIS + 1]
        valid = np.ones(len(joints), dtype=bool)
    return feats.reshape(len(joints), -1), valid


def _classifier_step(params, x, y, depth):
    h, cache = _trunk_forward(params, x, depth)
    logits = h @ params["logits.W"] + params["logits.b"]
    logits = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    B = len(x)
    loss = float(-np.log(p[np.arange(B), y] + 1e-300).mean())
    d_logits = p
    d_logits[np.arange(B), y] -= 1.0
    d_logits /= B
    grads = {"logits.W": h.T @ d_logits, "logits.b": d_logits.sum(axis=0)}
    _trunk_backward(params, cache, d_logits @ params["logits.W"].T, grads)
    return loss, grads


def dataset_origin_probe(records_by_profile: Mapping[str, Sequence[PoseRecord]], normalize: bool,
                         seed: int = 0, hidden: Sequence[int] = None, epochs: int = None,
                         test_fraction: float = None) -> ProbeResult:
    """Held-out accuracy of an MLP guessing which dataset a pose came from."""
    hidden = tuple(config.PROBE_HIDDEN if hidden is None else hidden)
    epochs = config.PROBE_EPOCHS if epochs is None else epochs
    test_fraction = config.PROBE_TEST_FRACTION if test_fraction is None else test_fraction
    labels = sorted(records_by_profile)
    if len(labels) < 2:
        raise ConfigurationError("the dataset-origin probe needs at least two datasets")

    feats, targets = [], []
    for label_idx, name in enumerate(labels):
        f, valid = probe_features(records_by_profile[name], normalize)
        feats.append(f[valid])
        targets.append(np.full(int(np.sum(valid)), label_idx))
    X = np.concatenate(feats)
    y = np.concatenate(targets)

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(X))
    n_test = max(1, int(round(test_fraction * len(X))))
    test_idx, train_idx = order[:n_test], order[n_test:]
    if len(train_idx) == 0:
        raise ViewBiasError("not enough records to hold out a test split")
    mean = X[train_idx].mean(axis=0)
    std = X[train_idx].std(axis=0)
    X = (X - mean) / np.where(std > 1e-12, std, 1.0)

    params: Dict[str, np.ndarray] = {}
    fan_in = X.shape[1]
    for i, width in enumerate(hidden):
        params[f"trunk.{i}.W"], params[f"trunk.{i}.b"] = _dense_init(rng, fan_in, width)
        fan_in = width
    params["logits.W"], params["logits.b"] = _dense_init(rng, fan_in, len(labels))

    optimizer = Adam()
    for _ in tqdm(range(epochs), desc="probe", unit="epoch", disable=not config.SHOW_PROGRESS, leave=False):
        perm = rng.permutation(train_idx)
        for start in range(0, len(perm), config.BATCH_SIZE):
            idx = perm[start:start + config.BATCH_SIZE]
            _, grads = _classifier_step(params, X[idx], y[idx], len(hidden))
            optimizer.step(params, grads)

    h, _ = _trunk_forward(params, X[test_idx], len(hidden))
    predicted = np.argmax(h @ params["logits.W"] + params["logits.b"], axis=1)
    accuracy = float(np.mean(predicted == y[test_idx]))
    logger.info(f"📊 Dataset-origin probe ({'normalized' if normalize else 'raw'} features, "
                f"{len(labels)} datasets): accuracy {accuracy:.3f}, chance {1.0 / len(labels):.3f}")
    return ProbeResult(accuracy=accuracy, chance=1.0 / len(labels), n_train=len(train_idx),
                       n_test=len(test_idx), labels=labels)
