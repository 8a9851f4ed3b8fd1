#!/usr/bin/env python3
"""
Tests for MPJPE, Procrustes alignment and PCK3D
"""

import sys

import numpy as np
from scipy.spatial.transform import Rotation

from errors import DegenerateSkeletonError, ShapeMismatchError, ViewBiasError
from metrics import (REPORT_COLUMNS, evaluate_poses, joint_errors, mpjpe, pa_mpjpe, pck3d, pck3d_pose,
                     procrustes_align, procrustes_batch, viewpoint_error)
from skeleton import NUM_JOINTS, Pose


def random_joints(rng, n=None):
    shape = (NUM_JOINTS, 3) if n is None else (n, NUM_JOINTS, 3)
    return rng.normal(0.0, 300.0, shape)


def test_mpjpe_examples():
    gt = np.zeros((NUM_JOINTS, 3))
    assert mpjpe(gt, gt) == 0.0
    pred = gt.copy()
    pred[3] = [3.0, 4.0, 0.0]
    assert abs(mpjpe(pred, gt) - 5.0 / 14.0) < 1e-12
    assert abs(mpjpe(gt + [0.0, 0.0, 100.0], gt) - 100.0) < 1e-12
    assert joint_errors(Pose(pred), Pose(gt)).shape == (NUM_JOINTS,)
    try:
        mpjpe(np.zeros((13, 3)), np.zeros((14, 3)))
        assert False, "shape mismatch should be rejected"
    except ShapeMismatchError:
        pass


def test_procrustes_removes_similarity():
    rng = np.random.default_rng(1)
    for seed in range(20):
        gt = random_joints(rng)
        R = Rotation.random(None, seed).as_matrix()
        s = rng.uniform(0.5, 2.0)
        t = rng.normal(0.0, 1000.0, 3)
        pred = s * gt @ R.T + t
        result = procrustes_align(pred, gt)
        assert np.abs(result.aligned.joints - gt).max() < 1e-6
        assert abs(result.scale - 1.0 / s) < 1e-9
        assert abs(np.linalg.det(result.rotation) - 1.0) < 1e-9
        assert pa_mpjpe(pred, gt) < 1e-6


def test_procrustes_identity():
    rng = np.random.default_rng(2)
    gt = random_joints(rng)
    result = procrustes_align(gt, gt)
    assert abs(result.scale - 1.0) < 1e-12
    assert np.allclose(result.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(result.translation, 0.0, atol=1e-6)


def test_procrustes_reflection():
    rng = np.random.default_rng(3)
    gt = random_joints(rng)
    mirrored = gt * [-1.0, 1.0, 1.0]
    result = procrustes_align(mirrored, gt)
    assert abs(np.linalg.det(result.rotation) - 1.0) < 1e-9
    assert pa_mpjpe(mirrored, gt) > 1.0


def test_procrustes_grid_oracle():
    """Brute force over rotations about z for a planar three-joint pose"""
    gt = np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, 50.0, 0.0]])
    theta = np.radians(37.0)
    Rz = np.array([[np.cos(theta), -np.sin(theta), 0.0], [np.sin(theta), np.cos(theta), 0.0], [0, 0, 1.0]])
    noise = np.array([[2.0, -1.0, 0.0], [-1.0, 3.0, 0.0], [0.5, -2.0, 0.0]])
    pred = (gt + noise) @ Rz.T
    aligned, R, s, t = procrustes_batch(pred[None], gt[None], with_scale=False)
    best = np.inf
    mu_p, mu_g = pred.mean(axis=0), gt.mean(axis=0)
    for angle in np.radians(np.arange(-180.0, 180.0, 0.01)):
        c, sn = np.cos(angle), np.sin(angle)
        Rg = np.array([[c, -sn, 0.0], [sn, c, 0.0], [0, 0, 1.0]])
        candidate = (pred - mu_p) @ Rg.T + mu_g
        best = min(best, np.sum((candidate - gt) ** 2))
    assert np.sum((aligned[0] - gt) ** 2) <= best + 1e-6
    assert abs(s[0] - 1.0) < 1e-12


def test_pa_never_exceeds_mpjpe():
    rng = np.random.default_rng(4)
    preds = random_joints(rng, 200)
    gts = random_joints(rng, 200)
    aligned, _, _, _ = procrustes_batch(preds, gts)
    assert np.all(joint_errors(aligned, gts).mean(axis=1) <= joint_errors(preds, gts).mean(axis=1) + 1e-9)


def test_collinear_prediction():
    gt = np.random.default_rng(5).normal(size=(NUM_JOINTS, 3))
    line = np.outer(np.arange(NUM_JOINTS, dtype=np.float64), [1.0, 2.0, 3.0])
    try:
        procrustes_align(line, gt)
        assert False, "collinear prediction should be rejected"
    except DegenerateSkeletonError:
        pass
    aligned, R, s, _ = procrustes_batch(line[None], gt[None], strict=False)
    assert np.allclose(R[0], np.eye(3)) and s[0] == 1.0
    assert np.allclose(aligned[0].mean(axis=0), gt.mean(axis=0))


def test_pck3d():
    gt = np.zeros((1, NUM_JOINTS, 3))
    pred = gt.copy()
    pred[0, 0] = [200.0, 0.0, 0.0]
    assert abs(pck3d(pred, gt, threshold=150.0) - 13.0 / 14.0) < 1e-12
    assert pck3d_pose(pred, gt, threshold=150.0) == 1.0

    rng = np.random.default_rng(6)
    preds = random_joints(rng, 50) * 0.5
    gts = random_joints(rng, 50) * 0.5
    hits = 0
    for p, g in zip(preds, gts):
        for j in range(NUM_JOINTS):
            hits += np.linalg.norm(p[j] - g[j]) < 150.0
    assert abs(pck3d(preds, gts) - hits / (50 * NUM_JOINTS)) < 1e-12
    assert pck3d([Pose(p) for p in preds[:3]], [Pose(g) for g in gts[:3]]) >= 0.0

    try:
        pck3d(np.zeros((0, NUM_JOINTS, 3)), np.zeros((0, NUM_JOINTS, 3)))
        assert False, "empty input should be rejected"
    except ViewBiasError:
        pass


def test_viewpoint_error():
    q = np.array([[1.0, 0, 0, 0], [np.cos(np.pi / 4), 0, np.sin(np.pi / 4), 0]])
    result = viewpoint_error(q, q)
    assert result["view_angle_deg"] < 1e-5
    result = viewpoint_error(q[:1], q[1:])
    assert abs(result["view_angle_deg"] - 90.0) < 1e-9
    assert abs(viewpoint_error(q, -q)["view_angle_deg"]) < 1e-5


def test_evaluate_poses():
    rng = np.random.default_rng(7)
    gts = random_joints(rng, 30)
    preds = gts + rng.normal(0.0, 20.0, gts.shape)
    preds[0] = np.outer(np.arange(NUM_JOINTS, dtype=np.float64), [1.0, 0.0, 0.0])
    report = evaluate_poses(preds, gts)
    assert report.count == 30
    assert report.pa_mpjpe_mm <= report.mpjpe_mm + 1e-9
    assert 0.0 <= report.pck3d <= 1.0
    assert len(report.per_joint_mm) == NUM_JOINTS
    row = report.csv_row("h36m-like", "3dpw-like")
    assert len(row) == len(REPORT_COLUMNS)
    assert row[:3] == ["h36m-like", "3dpw-like", 30]

    perfect = evaluate_poses(gts, gts)
    assert perfect.mpjpe_mm == 0.0 and perfect.pck3d == 1.0


def main():
    """Run all tests"""
    print("🧪 Metrics - Test Suite")
    print("=" * 50)

    tests = [
        ("MPJPE Examples", test_mpjpe_examples),
        ("Procrustes Similarity", test_procrustes_removes_similarity),
        ("Procrustes Identity", test_procrustes_identity),
        ("Procrustes Reflection", test_procrustes_reflection),
        ("Procrustes Grid Oracle", test_procrustes_grid_oracle),
        ("PA-MPJPE <= MPJPE", test_pa_never_exceeds_mpjpe),
        ("Collinear Prediction", test_collinear_prediction),
        ("PCK3D", test_pck3d),
        ("Viewpoint Error", test_viewpoint_error),
        ("Evaluate Poses", test_evaluate_poses),
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
