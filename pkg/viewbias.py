#!/usr/bin/env python3
"""
viewbias - viewpoint bias analysis and viewpoint-aware pose training

Subcommands: synth, analyze, cluster, train, eval, ablate. Every command
writes its outputs plus a run manifest (JSON) listing the SHA-256 of each
output file.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pytz
from tqdm import tqdm

import config
from analysis import (FEATURE_MODES, compute_stats, error_by_viewpoint, error_reduction,
                      error_reduction_by_viewpoint, export_pose_features, paired_seed_effect,
                      record_viewpoints, view_histogram, write_histogram_csv, write_joint_histogram_csv,
                      write_rows_csv, write_stats_csv, write_view_errors_csv)
from errors import ConfigurationError, ViewBiasError
from heads_losses import MODES, LossWeights
from metrics import REPORT_COLUMNS, joint_errors
from skeleton import PoseRecord, read_records, write_records
from synth import SynthConfig, builtin_profiles, generate, get_profile
from toy_net import (TrainConfig, dataset_origin_probe, evaluate, init_net, load_checkpoint,
                     prepare_dataset, save_checkpoint, train, write_loss_curve)
from view_cluster import cluster_summary, fit_kmeans, fit_scoped, load_model, save_model, scope_quaternions

logger = logging.getLogger("viewbias")

ABLATION_COLUMNS = ("experiment", "variant", "seed", "kmeans_seed", "k", "mode", "lambda", "scope",
                    "third_head", "train_set", "test_set", "count", "mpjpe_mm", "pa_mpjpe_mm", "pck3d",
                    "view_angle_deg", "final_loss", "passed")
SUMMARY_COLUMNS = ("cluster", "azimuth_deg", "elevation_deg", "w", "x", "y", "z")
EXPERIMENTS = ("k-sweep", "restarts", "modes", "scope", "third-head", "central")


@dataclass
class RunManifest:
    command: str
    config: Dict
    seeds: Dict[str, int]
    inputs: List[str]
    outputs: Dict[str, str] = field(default_factory=dict)
    started_at: str = ""
    wall_time_s: float = 0.0

    def add_output(self, path: str):
        self.outputs[path] = file_sha256(path)

    def write(self, path: str):
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)


def file_sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def setup_logging(verbose: bool, log_dir: str) -> logging.Handler:
    logging.basicConfig(level=config.LOG_LEVEL, format=config.LOG_FORMAT)
    logging.getLogger().setLevel(logging.DEBUG if verbose else config.LOG_LEVEL)
    tz = pytz.timezone(config.LOG_TIMEZONE)
    os.makedirs(log_dir, exist_ok=True)
    log_file = os.path.join(log_dir, f"viewbias_{datetime.now(tz).strftime('%Y%m%d_%H%M%S')}.log")
    handler = logging.FileHandler(log_file)
    handler.setFormatter(logging.Formatter(config.LOG_FILE_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def load_inputs(paths: Sequence[str]) -> Dict[str, List[PoseRecord]]:
    """Records from every JSONL file, grouped by their dataset tag in first-seen order."""
    grouped: Dict[str, List[PoseRecord]] = {}
    for path in paths:
        if not os.path.exists(path):
            raise ViewBiasError(f"input file not found: {path}")
        records = read_records(path)
        if not records:
            raise ViewBiasError(f"{path}: no records")
        for rec in records:
            grouped.setdefault(rec.dataset, []).append(rec)
        logger.info(f"📂 Loaded {len(records)} records from {path}")
    return grouped


def _flatten(grouped: Dict[str, List[PoseRecord]]) -> List[PoseRecord]:
    return [r for records in grouped.values() for r in records]


def _label(grouped: Dict[str, List[PoseRecord]]) -> str:
    return "+".join(grouped)


def _output_path(out_dir: str, name: str) -> str:
    return os.path.join(out_dir, name)


def _file_keys(paths: Sequence[str]) -> List[str]:
    """File stems, suffixed with their position when two inputs share a stem."""
    stems = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    return [s if stems.count(s) == 1 else f"{s}_{i}" for i, s in enumerate(stems)]


# Commands

def cmd_synth(args, manifest: RunManifest):
    profile = get_profile(args.profile)
    records = generate(SynthConfig(profile=profile, count=args.count, seed=args.seed))
    write_records(records, args.out)
    manifest.add_output(args.out)


def cmd_analyze(args, manifest: RunManifest):
    grouped = load_inputs(args.inputs)
    os.makedirs(args.out_dir, exist_ok=True)

    stats = [compute_stats(records, name) for name, records in grouped.items()]
    stats_path = _output_path(args.out_dir, "stats.csv")
    write_stats_csv(stats, stats_path)
    manifest.add_output(stats_path)

    for name, records in grouped.items():
        hist = view_histogram(records, args.azimuth_bins, args.elevation_bins, joint=True)
        logger.info(f"📊 {name}: {hist.total} viewpoints binned, {hist.skipped} skipped")
        for axis, edges, counts in (("azimuth", hist.azimuth_edges, hist.azimuth_counts),
                                    ("elevation", hist.elevation_edges, hist.elevation_counts)):
            path = _output_path(args.out_dir, f"hist_{axis}_{name}.csv")
            write_histogram_csv(edges, counts, path)
            manifest.add_output(path)
        path = _output_path(args.out_dir, f"hist_joint_{name}.csv")
        write_joint_histogram_csv(hist, path)
        manifest.add_output(path)

    features_path = _output_path(args.out_dir, f"features_{args.features}.csv")
    export_pose_features(_flatten(grouped), args.features, features_path)
    manifest.add_output(features_path)

    if args.probe:
        if len(grouped) < 2:
            raise ConfigurationError("--probe needs records from at least two datasets")
        results = {}
        for normalize in (True, False):
            probe = dataset_origin_probe(grouped, normalize=normalize, seed=args.seed)
            results["normalized" if normalize else "raw"] = probe._asdict()
        probe_path = _output_path(args.out_dir, "probe.json")
        with open(probe_path, "w", encoding="utf-8") as f:
            json.dump(results, f, indent=2, sort_keys=True)
        manifest.add_output(probe_path)


def cmd_cluster(args, manifest: RunManifest):
    grouped = load_inputs(args.inputs)
    model = fit_scoped(grouped, args.k, args.seed, scope=args.scope, n_init=args.n_init)
    save_model(model, args.out)
    manifest.add_output(args.out)
    summary_path = os.path.splitext(args.out)[0] + "_summary.csv"
    write_rows_csv(cluster_summary(model), SUMMARY_COLUMNS, summary_path)
    manifest.add_output(summary_path)


def _loss_weights(mode: str, lambda_q: float) -> LossWeights:
    if mode == "baseline":
        return LossWeights(lambda_q=0.0, mode="R")
    return LossWeights(lambda_q=lambda_q, mode=mode)


def cmd_train(args, manifest: RunManifest):
    weights = _loss_weights(args.mode, args.lambda_q)
    model = None
    if args.clusters:
        model = load_model(args.clusters)
    elif weights.needs_clusters:
        raise ConfigurationError(f"mode {args.mode} needs --clusters")
    grouped = load_inputs(args.train_files)
    cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, weights=weights,
                      seed=args.seed)
    net = init_net(args.hidden, seed=args.seed, third_head=args.third_head)
    data = prepare_dataset(_flatten(grouped), model)
    result = train(net, data, cfg, model)

    save_checkpoint(result.net, args.out, cfg, extra={"train_set": _label(grouped), "mode": args.mode,
                                                       "lambda": weights.lambda_q})
    manifest.add_output(args.out)
    loss_path = args.loss_csv or os.path.splitext(args.out)[0] + "_loss.csv"
    write_loss_curve(result.curve, loss_path)
    manifest.add_output(loss_path)


def _per_sample_view_errors(net, records):
    data = prepare_dataset(records)
    preds, _ = net.predict(data.x)
    errors = joint_errors(preds, data.pose_mm).mean(axis=1)
    az, el, valid = record_viewpoints(records)
    return error_by_viewpoint(errors, az[valid], el[valid])


def cmd_eval(args, manifest: RunManifest):
    net, meta = load_checkpoint(args.checkpoint)
    model = load_model(args.clusters) if args.clusters else None
    baseline = load_checkpoint(args.baseline)[0] if args.baseline else None
    train_set = args.train_set or meta.get("train_set", os.path.basename(args.checkpoint))

    rows, base_rows = [], []
    stem = os.path.splitext(args.out)[0]
    for path, file_key in zip(args.test_files, _file_keys(args.test_files)):
        grouped = load_inputs([path])
        records = _flatten(grouped)
        test_set = _label(grouped)
        report = evaluate(net, records, model)
        rows.append(dict(zip(REPORT_COLUMNS, report.csv_row(train_set, test_set))))
        logger.info(f"📊 {train_set} -> {test_set}: MPJPE {report.mpjpe_mm:.2f} mm, "
                    f"PA-MPJPE {report.pa_mpjpe_mm:.2f} mm, PCK3D {report.pck3d:.3f}")
        if baseline is not None:
            base_report = evaluate(baseline, records, model)
            base_rows.append(dict(zip(REPORT_COLUMNS, base_report.csv_row(train_set, test_set))))
        if args.by_view:
            table = _per_sample_view_errors(net, records)
            view_path = f"{stem}_view_{file_key}.csv"
            write_view_errors_csv(table, view_path)
            manifest.add_output(view_path)
            if baseline is not None:
                reduction = error_reduction_by_viewpoint(_per_sample_view_errors(baseline, records), table)
                red_path = f"{stem}_view_reduction_{file_key}.csv"
                write_rows_csv(reduction, ("axis", "bin_start", "bin_end", "count", "baseline_mm",
                                           "treated_mm", "reduction_mm"), red_path)
                manifest.add_output(red_path)

    columns = list(REPORT_COLUMNS)
    if baseline is not None:
        reductions, summary = error_reduction(base_rows, rows)
        for row, red in zip(rows, reductions):
            row.update({"baseline_mpjpe_mm": red["baseline"], "reduction_mm": red["reduction"],
                        "reduction_pct": red["reduction_pct"]})
        columns += ["baseline_mpjpe_mm", "reduction_mm", "reduction_pct"]
        logger.info(f"📊 Mean reduction: same-dataset {summary['same_dataset_reduction']:.2f} mm, "
                    f"cross-dataset {summary['cross_dataset_reduction']:.2f} mm")
    write_rows_csv(rows, columns, args.out)
    manifest.add_output(args.out)


# Ablations

def _run_variant(args, train_grouped, test_groups, weights: LossWeights, seed: int,
                 k: int = None, scope: str = "global", third_head: bool = False,
                 cluster_pool=None, kmeans_seed: int = None) -> List[Dict]:
    """Train one configuration and evaluate it on every test group.

    seed drives the network init and the shuffle; kmeans_seed (default: seed)
    drives the cluster fit only.
    """
    kmeans_seed = seed if kmeans_seed is None else kmeans_seed
    model = None
    if weights.needs_clusters:
        pool = cluster_pool if cluster_pool is not None else train_grouped
        model = fit_kmeans(scope_quaternions(pool, scope), k, kmeans_seed, scope=scope)
    train_records = _flatten(train_grouped)
    net = init_net(args.hidden, seed=seed, third_head=third_head)
    cfg = TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, weights=weights, seed=seed)
    result = train(net, prepare_dataset(train_records, model), cfg, model)
    rows = []
    for test_set, records in test_groups:
        report = evaluate(result.net, records, model)
        rows.append({"seed": seed, "kmeans_seed": kmeans_seed if model is not None else "",
                     "k": k if model is not None else "", "mode": weights.mode,
                     "lambda": weights.lambda_q, "scope": scope if model is not None else "",
                     "third_head": third_head, "train_set": _label(train_grouped), "test_set": test_set,
                     "count": report.count, "mpjpe_mm": report.mpjpe_mm, "pa_mpjpe_mm": report.pa_mpjpe_mm,
                     "pck3d": report.pck3d, "view_angle_deg": report.view_angle_deg,
                     "final_loss": result.curve[-1].loss})
    return rows


def _spread_rows(rows: List[Dict], experiment: str) -> List[Dict]:
    summary = []
    for test_set in dict.fromkeys(r["test_set"] for r in rows):
        values = np.array([r["mpjpe_mm"] for r in rows if r["test_set"] == test_set])
        mean = float(values.mean())
        spread = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        stable = mean > 0 and spread / mean < config.RESTART_MAX_SPREAD
        summary.append({"experiment": experiment, "variant": "mean", "test_set": test_set, "mpjpe_mm": mean})
        summary.append({"experiment": experiment, "variant": "spread", "test_set": test_set, "mpjpe_mm": spread,
                        "passed": stable})
        if not stable and mean > 0:
            logger.warning(f"⚠️  Restart spread on {test_set} is {100 * spread / mean:.1f}% of the mean")
    return summary


def _test_groups(paths: Sequence[str]) -> List[Tuple[str, List[PoseRecord]]]:
    """One (dataset tag, records) group per test file, in command-line order."""
    groups = []
    for path in paths:
        grouped = load_inputs([path])
        groups.append((_label(grouped), _flatten(grouped)))
    return groups


def cmd_ablate(args, manifest: RunManifest):
    train_grouped = load_inputs(args.train)
    test_groups = _test_groups(args.test or args.train)
    # global clusters pool every loaded dataset, test sets included
    everything = dict(train_grouped)
    for name, records in test_groups:
        everything.setdefault(name, records)
    treated = LossWeights(lambda_q=args.lambda_q, mode=args.mode)
    classification = LossWeights(lambda_q=args.lambda_q, mode="C")
    rows: List[Dict] = []

    def tagged(variant_rows, variant):
        for r in variant_rows:
            r.update({"experiment": args.experiment, "variant": variant})
        return variant_rows

    def run(weights, seed=args.seed, **kwargs):
        return _run_variant(args, train_grouped, test_groups, weights, seed, cluster_pool=everything, **kwargs)

    exp = args.experiment
    if exp == "k-sweep":
        for k in tqdm(args.ks, desc="k-sweep", disable=not config.SHOW_PROGRESS):
            rows += tagged(run(classification, k=k), f"k={k}")
    elif exp == "restarts":
        # only the cluster fit is repeated; network init and shuffle stay on args.seed
        for i in tqdm(range(args.restarts), desc="restarts", disable=not config.SHOW_PROGRESS):
            rows += tagged(run(treated, k=args.k, kmeans_seed=args.seed + i), f"restart={i}")
        rows += _spread_rows(rows, exp)
    elif exp == "modes":
        variants = [("baseline", LossWeights(0.0, "R"))] + [(m, LossWeights(args.lambda_q, m)) for m in MODES]
        for name, weights in tqdm(variants, desc="modes", disable=not config.SHOW_PROGRESS):
            rows += tagged(run(weights, k=args.k), name)
    elif exp == "scope":
        scopes = ["global"] + [f"local:{name}" for name in train_grouped]
        for scope in tqdm(scopes, desc="scope", disable=not config.SHOW_PROGRESS):
            rows += tagged(run(classification, k=args.k, scope=scope), scope)
    elif exp == "third-head":
        for third in (False, True):
            rows += tagged(run(classification, k=args.k, third_head=third), f"third_head={str(third).lower()}")
    elif exp == "central":
        for i in tqdm(range(args.pairs), desc="central", disable=not config.SHOW_PROGRESS):
            seed = args.seed + i
            rows += tagged(run(LossWeights(0.0, "R"), seed), "baseline")
            rows += tagged(run(treated, seed, k=args.k), "treated")
        rows += _central_summary(rows, list(train_grouped))
    write_rows_csv(rows, ABLATION_COLUMNS, args.out)
    manifest.add_output(args.out)


def _central_summary(rows: List[Dict], train_sets: Sequence[str]) -> List[Dict]:
    summary = []
    for effect in paired_seed_effect(rows, train_sets):
        test_set = effect["test_set"]
        logger.info(f"📊 {test_set}: treated beats baseline in {effect['wins']}/{effect['pairs']} pairs, "
                    f"mean relative reduction {100 * effect['relative_reduction']:.2f}% "
                    f"({effect['reduction_mm']:.2f} mm)")
        summary.append({"experiment": "central", "variant": "wins", "test_set": test_set, "count": effect["wins"]})
        summary.append({"experiment": "central", "variant": "relative_reduction", "test_set": test_set,
                        "mpjpe_mm": effect["relative_reduction"]})
        if effect["passed"] is not None:
            status = "✅ holds" if effect["passed"] else "❌ does not hold"
            logger.info(f"{status}: cross-dataset effect on {test_set} (wins >= "
                        f"{effect['wins_needed']}/{effect['pairs']}, reduction >= "
                        f"{100 * config.CENTRAL_MIN_REDUCTION:.0f}%, same-dataset gap "
                        f"{effect['same_dataset_gap_mm']:.2f} mm below {effect['reduction_mm']:.2f} mm)")
            summary.append({"experiment": "central", "variant": "criterion", "test_set": test_set,
                            "count": effect["pairs"], "mpjpe_mm": effect["reduction_mm"],
                            "passed": effect["passed"]})
    return summary


COMMANDS = {
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "cluster": cmd_cluster,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def _input_paths(args) -> List[str]:
    paths = []
    for name in ("inputs", "train_files", "test_files", "train", "test", "clusters", "checkpoint", "baseline"):
        value = getattr(args, name, None)
        if isinstance(value, list):
            paths += value
        elif value:
            paths.append(value)
    return paths


def _primary_output(args) -> str:
    if args.command == "analyze":
        return os.path.join(args.out_dir, "analyze")
    return args.out


def parse_arguments(argv=None):
    """Parse command line arguments"""
    parser = argparse.ArgumentParser(
        prog="viewbias",
        description="Viewpoint bias analysis and viewpoint-aware 3D pose training",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  viewbias synth --profile h36m-like --count 20000 --seed 1 --out h36m.jsonl
  viewbias analyze h36m.jsonl 3dpw.jsonl --out-dir report --probe
  viewbias cluster h36m.jsonl 3dpw.jsonl --k 100 --seed 0 --out clusters.json
  viewbias train 3dpw.jsonl --clusters clusters.json --mode C --lambda 0.5 --out net.json
  viewbias eval --checkpoint net.json surreal.jsonl 3dpw.jsonl --by-view --out report.csv
  viewbias ablate --experiment central --train 3dpw.jsonl --test surreal.jsonl 3dpw_test.jsonl

Formats:
  records     JSONL, one object per line: dataset, subject, frame,
              intrinsics {{fx, fy, cx, cy}}, joints3d (14 x [x, y, z] mm, camera
              frame; joints3d[0] may be null and is then the hip midpoint),
              optional joints2d (14 x [u, v] px)
  clusters    JSON: k, seed, scope, inertia, n_iter, centers (k x [w, x, y, z])
  checkpoint  JSON: input_size, hidden, third_head, z_max, bins, params (flat),
              config, config_hash, train_set, mode, lambda
  loss curve  CSV: epoch, loss, L_pose, L_q
  eval report CSV: {', '.join(REPORT_COLUMNS)}
              (+ baseline_mpjpe_mm, reduction_mm, reduction_pct with --baseline)
  by-view     CSV: axis, bin_start, bin_end, count, mean_error
  stats       CSV: dataset, count, distance mean/std (m), focal mean/std,
              bone-length sum mean/std (m); sample std (n-1)
  histograms  CSV: bin_start, bin_end, count
  features    CSV: f0..f41, dataset
  ablation    CSV: {', '.join(ABLATION_COLUMNS)}
  manifest    JSON next to the primary output: command, config, seeds,
              inputs, outputs (sha256), started_at, wall_time_s

Profiles: {', '.join(builtin_profiles())}
        """,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose logging")
    parser.add_argument("--log-dir", default=config.LOG_DIR, help=f"Log directory (default: {config.LOG_DIR})")
    parser.add_argument("--manifest", help="Run manifest path (default: <output>.manifest.json)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="Generate a synthetic biased dataset")
    p.add_argument("--profile", required=True, help="Bias profile name")
    p.add_argument("--count", type=int, required=True, help="Number of records")
    p.add_argument("--seed", type=int, default=0, help="Random seed (default: 0)")
    p.add_argument("--out", required=True, help="Output JSONL file")

    p = sub.add_parser("analyze", help="Dataset statistics, viewpoint histograms and pose features")
    p.add_argument("inputs", nargs="+", help="Record JSONL files")
    p.add_argument("--out-dir", required=True, help="Output directory")
    p.add_argument("--azimuth-bins", type=int, default=config.AZIMUTH_BINS)
    p.add_argument("--elevation-bins", type=int, default=config.ELEVATION_BINS)
    p.add_argument("--features", choices=FEATURE_MODES, default="body-centered+size-normalized",
                   help="Pose feature normalization (default: body-centered+size-normalized)")
    p.add_argument("--probe", action="store_true", help="Run the dataset-origin probe")
    p.add_argument("--seed", type=int, default=0, help="Probe seed (default: 0)")

    p = sub.add_parser("cluster", help="Fit viewpoint clusters")
    p.add_argument("inputs", nargs="+", help="Record JSONL files")
    p.add_argument("--k", type=int, default=config.DEFAULT_K, help=f"Clusters (default: {config.DEFAULT_K})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scope", default="global", help="global or local:<dataset> (default: global)")
    p.add_argument("--n-init", type=int, default=config.KMEANS_N_INIT, help="k-means++ restarts")
    p.add_argument("--out", required=True, help="Output cluster JSON")

    def training_flags(p):
        p.add_argument("--lambda", dest="lambda_q", type=float, default=config.DEFAULT_LAMBDA,
                       help=f"Viewpoint loss weight (default: {config.DEFAULT_LAMBDA})")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epochs", type=int, default=config.EPOCHS)
        p.add_argument("--batch-size", type=int, default=config.BATCH_SIZE)
        p.add_argument("--lr", type=float, default=config.LEARNING_RATE)
        p.add_argument("--hidden", type=int, nargs="+", default=list(config.HIDDEN_SIZES))

    p = sub.add_parser("train", help="Train the pose + viewpoint network")
    p.add_argument("train_files", nargs="+", help="Training record JSONL files")
    p.add_argument("--clusters", help="Cluster JSON (required for modes C and C+R)")
    p.add_argument("--mode", choices=list(MODES) + ["baseline"], default=config.DEFAULT_MODE)
    p.add_argument("--third-head", action="store_true", help="Add the canonical-pose head")
    p.add_argument("--out", required=True, help="Checkpoint JSON")
    p.add_argument("--loss-csv", help="Loss curve CSV (default: <out>_loss.csv)")
    training_flags(p)

    p = sub.add_parser("eval", help="Evaluate a checkpoint on test sets")
    p.add_argument("test_files", nargs="+", help="Test record JSONL files, one report row each")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--baseline", help="Baseline checkpoint; adds error-reduction columns")
    p.add_argument("--clusters", help="Cluster JSON for viewpoint cluster accuracy")
    p.add_argument("--train-set", help="Train-set label (default: from the checkpoint)")
    p.add_argument("--by-view", action="store_true", help="Write per-viewpoint-bin error files")
    p.add_argument("--out", required=True, help="Report CSV")

    p = sub.add_parser("ablate", help="Run an ablation experiment")
    p.add_argument("--experiment", choices=EXPERIMENTS, required=True)
    p.add_argument("--train", nargs="+", required=True, help="Training record JSONL files")
    p.add_argument("--test", nargs="+", help="Test record JSONL files (default: the training files)")
    p.add_argument("--mode", choices=MODES, default=config.DEFAULT_MODE)
    p.add_argument("--k", type=int, default=config.DEFAULT_K)
    p.add_argument("--ks", type=int, nargs="+", default=list(config.ABLATION_KS))
    p.add_argument("--restarts", type=int, default=config.KMEANS_RESTARTS)
    p.add_argument("--pairs", type=int, default=config.CENTRAL_PAIRS, help="Seed pairs for central")
    p.add_argument("--out", required=True, help="Ablation CSV")
    training_flags(p)

    return parser.parse_args(argv)


def main(argv=None) -> int:
    """Main execution function"""
    args = parse_arguments(argv)
    handler = setup_logging(args.verbose, args.log_dir)
    tz = pytz.timezone(config.LOG_TIMEZONE)
    started = time.time()
    seeds = {"seed": args.seed} if hasattr(args, "seed") else {}
    manifest = RunManifest(
        command=args.command,
        config={k: v for k, v in vars(args).items() if k not in ("log_dir", "manifest", "verbose")},
        seeds=seeds, inputs=_input_paths(args),
        started_at=datetime.now(tz).strftime("%Y-%m-%d %H:%M:%S %Z"),
    )
    logger.info(f"🔄 viewbias {' '.join(sys.argv[1:] if argv is None else argv)}")
    try:
        COMMANDS[args.command](args, manifest)
        missing = [p for p in manifest.outputs if not os.path.exists(p) or os.path.getsize(p) == 0]
        if not manifest.outputs or missing:
            raise ViewBiasError(f"declared outputs missing or empty: {', '.join(missing) or 'none written'}")
        manifest.wall_time_s = round(time.time() - started, 3)
        manifest_path = args.manifest or _primary_output(args) + ".manifest.json"
        manifest.write(manifest_path)
        logger.info(f"✅ {args.command} finished in {manifest.wall_time_s:.1f}s; "
                    f"{len(manifest.outputs)} output(s), manifest {manifest_path}")
        return 0
    except (ViewBiasError, OSError) as e:
        logger.error(f"❌ {args.command} failed: {e}")
        return 1
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()


if __name__ == "__main__":
    sys.exit(main())
