#!/usr/bin/env python3
"""
Tests for the skeleton data model and the JSONL record format
"""

import json
import os
import sys
import tempfile

import numpy as np

from errors import BehindCameraError, DegenerateSkeletonError, InvalidRecordError
from skeleton import (JOINT_INDEX, JOINTS, NUM_JOINTS, CameraIntrinsics, JointSet, Pose, PoseRecord,
                      back_project, bone_length_sum, normalize_skeleton, project_to_2d, read_records,
                      root_relative, write_records)


def random_pose(rng, depth=4000.0):
    joints = rng.normal(0.0, 300.0, (NUM_JOINTS, 3))
    joints[:, 2] += depth
    return Pose(joints)


def test_joint_set():
    """Joint set lists 14 joints with a 13-bone tree rooted at pelvis"""
    assert len(JOINTS.names) == 14
    assert len(JOINTS.edges) == 13
    assert JOINTS.names[0] == "pelvis"
    try:
        JointSet(edges=JOINTS.edges[:-1])
        assert False, "a missing bone should be rejected"
    except InvalidRecordError:
        pass


def test_pose_validation():
    try:
        Pose(np.zeros((13, 3)))
        assert False, "wrong joint count should be rejected"
    except InvalidRecordError:
        pass
    joints = np.zeros((NUM_JOINTS, 3))
    joints[3, 1] = np.nan
    try:
        Pose(joints)
        assert False, "NaN coordinates should be rejected"
    except InvalidRecordError:
        pass


def test_root_relative():
    joints = np.zeros((NUM_JOINTS, 3))
    joints[:, 2] = 4000.0
    joints[JOINT_INDEX["head"]] = [0.0, -800.0, 4000.0]
    rooted = root_relative(Pose(joints))
    assert np.array_equal(rooted.joints[0], [0.0, 0.0, 0.0])
    assert np.array_equal(rooted.joints[JOINT_INDEX["head"]], [0.0, -800.0, 0.0])
    assert root_relative(rooted) == rooted

    pose = random_pose(np.random.default_rng(3))
    rooted = root_relative(pose)
    assert np.linalg.norm(rooted.pelvis) == 0.0
    d_before = np.linalg.norm(pose.joints[:, None] - pose.joints[None], axis=-1)
    d_after = np.linalg.norm(rooted.joints[:, None] - rooted.joints[None], axis=-1)
    assert np.allclose(d_before, d_after, atol=1e-9)


def test_bone_length_sum():
    assert bone_length_sum(Pose(np.ones((NUM_JOINTS, 3)))) == 0.0
    pose = random_pose(np.random.default_rng(4))
    doubled = Pose(2.0 * pose.joints)
    assert np.isclose(bone_length_sum(doubled), 2.0 * bone_length_sum(pose), rtol=1e-12)


def test_normalize_skeleton():
    rng = np.random.default_rng(5)
    pose = root_relative(random_pose(rng))
    target = 3700.0
    scaled = Pose(pose.joints * (2 * target / bone_length_sum(pose)))
    normalized = normalize_skeleton(scaled, target)
    assert np.allclose(normalized.joints, scaled.joints / 2.0, rtol=1e-12, atol=1e-9)
    again = normalize_skeleton(normalized, target)
    assert np.allclose(again.joints, normalized.joints, rtol=1e-9)

    for _ in range(20):
        out = normalize_skeleton(random_pose(rng), target)
        assert abs(bone_length_sum(out) - target) <= 1e-9 * target

    try:
        normalize_skeleton(Pose(np.ones((NUM_JOINTS, 3))), target)
        assert False, "zero-length skeleton should be rejected"
    except DegenerateSkeletonError:
        pass


def test_projection():
    K = CameraIntrinsics(1000.0, 1000.0, 500.0, 500.0)
    joints = np.tile([0.0, 0.0, 1000.0], (NUM_JOINTS, 1))
    joints[1] = [100.0, 0.0, 1000.0]
    kp = project_to_2d(Pose(joints), K)
    assert np.allclose(kp[0], [500.0, 500.0])
    assert np.allclose(kp[1], [600.0, 500.0])

    pose = random_pose(np.random.default_rng(6))
    back = back_project(project_to_2d(pose, K), pose.joints[:, 2], K)
    assert np.allclose(back.joints, pose.joints, atol=1e-9)

    joints[4, 2] = -10.0
    try:
        project_to_2d(Pose(joints), K)
        assert False, "joint behind the camera should be rejected"
    except BehindCameraError:
        pass


def test_jsonl_round_trip():
    rng = np.random.default_rng(7)
    K = CameraIntrinsics(1145.0, 1143.0, 512.0, 515.0)
    records = [PoseRecord("h36m-like", "S1", i, K, random_pose(rng)) for i in range(5)]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "records.jsonl")
        assert write_records(records, path) == 5
        loaded = read_records(path)
    assert len(loaded) == 5
    for a, b in zip(records, loaded):
        assert a.pose3d == b.pose3d
        assert a.intrinsics == b.intrinsics
        assert (a.dataset, a.subject, a.frame) == (b.dataset, b.subject, b.frame)


def test_missing_pelvis_is_synthesized():
    rng = np.random.default_rng(8)
    pose = random_pose(rng)
    data = {"dataset": "3dpw-like", "subject": "A", "frame": 0,
            "intrinsics": {"fx": 1962.0, "fy": 1962.0, "cx": 540.0, "cy": 960.0},
            "joints3d": [None] + pose.joints[1:].tolist()}
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "records.jsonl")
        with open(path, "w") as f:
            f.write(json.dumps(data) + "\n")
        record = read_records(path)[0]
    hips = (pose.joints[JOINT_INDEX["l_hip"]] + pose.joints[JOINT_INDEX["r_hip"]]) / 2.0
    assert record.pelvis_synthesized
    assert np.allclose(record.pose3d.pelvis, hips)


def test_malformed_records():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "bad.jsonl")
        with open(path, "w") as f:
            f.write('{"dataset": "x", "intrinsics": {"fx": 1, "fy": 1, "cx": 0, "cy": 0}, '
                    '"joints3d": [[0, 0, 1]]}\n')
        try:
            read_records(path)
            assert False, "13 missing joints should be rejected"
        except InvalidRecordError as e:
            assert ":1:" in str(e)

        with open(path, "w") as f:
            f.write("not json\n")
        try:
            read_records(path)
            assert False, "invalid JSON should be rejected"
        except InvalidRecordError:
            pass

    joints = np.zeros((NUM_JOINTS, 3))
    try:
        PoseRecord("x", "s", 0, CameraIntrinsics(1, 1, 0, 0), Pose(joints))
        assert False, "pelvis at zero depth should be rejected"
    except InvalidRecordError:
        pass


def main():
    """Run all tests"""
    print("🧪 Skeleton - Test Suite")
    print("=" * 50)

    tests = [
        ("Joint Set", test_joint_set),
        ("Pose Validation", test_pose_validation),
        ("Root Relative", test_root_relative),
        ("Bone Length Sum", test_bone_length_sum),
        ("Normalize Skeleton", test_normalize_skeleton),
        ("Projection", test_projection),
        ("JSONL Round Trip", test_jsonl_round_trip),
        ("Pelvis Synthesis", test_missing_pelvis_is_synthesized),
        ("Malformed Records", test_malformed_records),
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
