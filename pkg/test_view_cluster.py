#!/usr/bin/env python3
"""
Tests for viewpoint quaternion clustering
"""

import os
import sys
import tempfile
import time

import numpy as np
from scipy.spatial.transform import Rotation

import config
from body_frame import canonicalize_quaternions
from errors import ClusteringError
from skeleton import NUM_JOINTS, CameraIntrinsics, Pose, PoseRecord
from view_cluster import (ClusterModel, assign, assign_many, cluster_summary, fit_kmeans, fit_scoped,
                          load_model, record_quaternions, save_model)


def random_quats(n, seed):
    xyzw = Rotation.random(n, seed).as_quat()
    return canonicalize_quaternions(np.roll(xyzw, 1, axis=1))


def random_records(dataset, n, seed):
    rng = np.random.default_rng(seed)
    K = CameraIntrinsics(1000.0, 1000.0, 500.0, 500.0)
    records = []
    for i in range(n):
        joints = rng.normal(0.0, 300.0, (NUM_JOINTS, 3))
        joints[:, 2] += 5000.0
        records.append(PoseRecord(dataset, "s", i, K, Pose(joints)))
    return records


def test_exact_cover():
    points = random_quats(12, 1)
    model = fit_kmeans(points, 12, seed=0)
    assert model.inertia < 1e-20
    for p in points:
        assert np.min(np.linalg.norm(model.centers - p, axis=1)) < 1e-12


def test_antipodal_collapse():
    q = random_quats(1, 2)[0]
    model = fit_kmeans(np.stack([q, -q]), 1, seed=0)
    assert np.allclose(model.centers[0], q, atol=1e-12)
    assert model.inertia < 1e-20


def test_generator_recovery():
    generators = Rotation.from_rotvec(np.array([
        [0.0, 0.0, 0.0],
        [np.pi / 2, 0.0, 0.0],
        [0.0, np.pi / 2, 0.0],
        [0.0, 0.0, np.pi / 2],
    ]))
    rng = np.random.default_rng(3)
    samples = []
    for g in range(4):
        noise = Rotation.from_rotvec(rng.normal(0.0, np.radians(3.0), (250, 3)))
        samples.append((noise * generators[g]).as_quat())
    quats = canonicalize_quaternions(np.roll(np.concatenate(samples), 1, axis=1))
    truth = canonicalize_quaternions(np.roll(generators.as_quat(), 1, axis=1))
    model = fit_kmeans(quats, 4, seed=7, n_init=5)
    for g in truth:
        assert np.min(np.linalg.norm(model.centers - g, axis=1)) < 0.05


def test_inertia_non_increasing():
    quats = random_quats(2000, 4)
    model = fit_kmeans(quats, 10, seed=1)
    history = np.array(model.inertia_history)
    assert len(history) >= 2
    assert np.all(np.diff(history) <= 1e-9 * (1.0 + history[:-1]))
    assert np.allclose(np.linalg.norm(model.centers, axis=1), 1.0)
    assert np.all(model.centers[:, 0] >= 0)


def test_assign():
    quats = random_quats(500, 5)
    model = fit_kmeans(quats, 20, seed=2)
    assert assign(model, model.centers[7]) == 7
    assert assign(model, -model.centers[7]) == 7
    probes = random_quats(200, 6)
    brute = [int(np.argmin([np.sum((c - q) ** 2) for c in model.centers])) for q in probes]
    assert [assign(model, q) for q in probes] == brute
    assert list(assign_many(model, probes)) == brute
    assert list(assign_many(model, -probes)) == brute


def test_too_few_points():
    quats = random_quats(5, 7)
    try:
        fit_kmeans(np.concatenate([quats, quats]), 6, seed=0)
        assert False, "k above the number of distinct points should be rejected"
    except ClusteringError:
        pass


def test_scopes():
    data = {"A": random_records("A", 60, 8), "B": random_records("B", 60, 9)}
    model = fit_scoped(data, 5, seed=3)
    assert model.scope == "global"
    local = fit_scoped(data, 5, seed=3, scope="local:A")
    direct = fit_kmeans(record_quaternions(data["A"]), 5, seed=3, scope="local:A")
    assert local.scope == "local:A"
    assert local.inertia == direct.inertia
    assert np.array_equal(local.centers, direct.centers)
    for bad in ("local:C", "regional"):
        try:
            fit_scoped(data, 5, seed=3, scope=bad)
            assert False, f"scope {bad} should be rejected"
        except ClusteringError:
            pass
    assert config.DEFAULT_K == 100


def test_save_load():
    model = fit_kmeans(random_quats(300, 10), 8, seed=4)
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "clusters.json")
        save_model(model, path)
        loaded = load_model(path)
        with open(path, "w") as f:
            f.write("{")
        try:
            load_model(path)
            assert False, "truncated JSON should be rejected"
        except ClusteringError:
            pass
    assert isinstance(loaded, ClusterModel)
    assert np.array_equal(loaded.centers, model.centers)
    assert (loaded.k, loaded.seed, loaded.scope) == (8, 4, "global")


def test_cluster_summary():
    quats = np.array([[1.0, 0, 0, 0], [np.cos(np.pi / 4), 0, np.sin(np.pi / 4), 0]])
    model = ClusterModel(centers=quats, k=2, seed=0, scope="global", inertia=0.0)
    summary = cluster_summary(model)
    assert abs(summary[0]["azimuth_deg"]) < 1e-9 and abs(summary[0]["elevation_deg"]) < 1e-9
    assert abs(abs(summary[1]["azimuth_deg"]) - 90.0) < 1e-9


def test_large_fit_runtime():
    quats = random_quats(50000, 11)
    start = time.time()
    model = fit_kmeans(quats, 100, seed=0)
    assert time.time() - start < 60.0
    assert model.k == 100 and len(model.centers) == 100


def main():
    """Run all tests"""
    print("🧪 View Clustering - Test Suite")
    print("=" * 50)

    tests = [
        ("Exact Cover", test_exact_cover),
        ("Antipodal Collapse", test_antipodal_collapse),
        ("Generator Recovery", test_generator_recovery),
        ("Inertia Non-increasing", test_inertia_non_increasing),
        ("Assign", test_assign),
        ("Too Few Points", test_too_few_points),
        ("Scopes", test_scopes),
        ("Save / Load", test_save_load),
        ("Cluster Summary", test_cluster_summary),
        ("Large Fit Runtime", test_large_fit_runtime),
    ]

    passed = 0
    for test_name, test_func in tests:
        try:
            test_func()
            print(f"✅ PASS {test_name}")
            passed += 1
        except Exception as e:
            print(f"❌ FAIL {test_name}: {e!r}")

    print("\n" + "=" * 50)
    print(f"🎯 {passed}/{len(tests)} tests passed")
    return passed == len(tests)


if __name__ == "__main__":
    sys.exit(0 if main() else 1)
