#!/usr/bin/env python3
"""
Tests for body-centered frames, quaternion conversion and viewpoints
"""

import sys

import numpy as np
from scipy.spatial.transform import Rotation

from body_frame import (BodyFrame, body_centered, body_view_direction, canonicalize_quaternion,
                        compute_body_frame, compute_body_frames, quaternion_to_rotation,
                        rotation_to_quaternion, rotations_to_quaternions, single_branch_quaternion,
                        viewpoint_from_frame, viewpoint_of_pose, viewpoints_from_rotations)
from errors import DegenerateFrameError, NotARotationError, ZeroQuaternionError
from skeleton import JOINT_INDEX, NUM_JOINTS, PELVIS, Pose


def torso_pose(pelvis, l_shoulder, r_shoulder):
    joints = np.tile(np.asarray(pelvis, dtype=np.float64), (NUM_JOINTS, 1))
    joints[JOINT_INDEX["l_shoulder"]] = l_shoulder
    joints[JOINT_INDEX["r_shoulder"]] = r_shoulder
    return Pose(joints)


def random_pose(rng):
    joints = rng.normal(0.0, 300.0, (NUM_JOINTS, 3))
    joints[:, 2] += 5000.0
    return Pose(joints)


FACING = torso_pose((0, 0, 4000), (150, -500, 4000), (-150, -500, 4000))
FACING_RIGHT = torso_pose((0, 0, 4000), (0, -500, 4150), (0, -500, 3850))


def test_facing_camera_is_identity():
    frame = compute_body_frame(FACING)
    assert np.allclose(frame.u, [0, -1, 0], atol=1e-12)
    assert np.allclose(frame.f, [0, 0, -1], atol=1e-12)
    assert np.allclose(frame.r, [-1, 0, 0], atol=1e-12)
    assert np.allclose(frame.rotation, np.eye(3), atol=1e-9)
    assert np.allclose(frame.q, [1, 0, 0, 0], atol=1e-9)
    view = viewpoint_of_pose(FACING)
    assert abs(view.azimuth) < 1e-9 and abs(view.elevation) < 1e-9


def test_facing_camera_right():
    frame = compute_body_frame(FACING_RIGHT)
    assert np.allclose(frame.f, [1, 0, 0], atol=1e-12)
    assert np.allclose(frame.u, [0, -1, 0], atol=1e-12)
    assert np.allclose(frame.r, [0, 0, -1], atol=1e-12)
    view = viewpoint_of_pose(FACING_RIGHT)
    assert abs(view.azimuth - 90.0) < 1e-9 and abs(view.elevation) < 1e-9


def test_pole_convention():
    # lying along the optical axis, head toward the camera, chest up
    pose = torso_pose((0, 0, 4000), (150, 0, 3500), (-150, 0, 3500))
    view = viewpoint_of_pose(pose)
    assert abs(view.elevation - 90.0) < 1e-9
    assert view.azimuth == 0.0


def test_degenerate_frame():
    collinear = torso_pose((0, 0, 4000), (150, 0, 4000), (-150, 0, 4000))
    try:
        compute_body_frame(collinear)
        assert False, "collinear torso should be rejected"
    except DegenerateFrameError:
        pass
    _, _, valid = compute_body_frames(np.stack([collinear.joints, FACING.joints]))
    assert list(valid) == [False, True]


def test_frames_are_rotations():
    rng = np.random.default_rng(11)
    joints = np.stack([random_pose(rng).joints for _ in range(500)])
    R, Q, valid = compute_body_frames(joints)
    assert valid.all()
    gram = np.einsum("nji,njk->nik", R, R)
    assert np.abs(gram - np.eye(3)).max() < 1e-9
    assert np.abs(np.linalg.det(R) - 1.0).max() < 1e-9
    assert np.all(Q[:, 0] >= 0)
    for i in range(0, 500, 50):
        frame = compute_body_frame(Pose(joints[i]))
        assert np.allclose(frame.rotation, R[i], atol=1e-12)


def test_equivariance():
    rng = np.random.default_rng(12)
    rotations = Rotation.random(100, 12).as_matrix()
    for G in rotations:
        pose = random_pose(rng)
        moved = Pose(pose.joints @ G.T)
        R = compute_body_frame(pose).rotation
        R_moved = compute_body_frame(moved).rotation
        assert np.abs(R_moved - G @ R).max() < 1e-9
        assert np.abs(body_centered(moved).joints - body_centered(pose).joints).max() < 1e-9


def test_body_centered_has_identity_frame():
    rng = np.random.default_rng(13)
    for _ in range(20):
        canonical = body_centered(random_pose(rng))
        assert np.allclose(canonical.joints[PELVIS], 0.0)
        shifted = Pose(canonical.joints + [0.0, 0.0, 3000.0])
        assert np.allclose(compute_body_frame(shifted).q, [1, 0, 0, 0], atol=1e-9)


def test_rotation_to_quaternion_examples():
    assert np.allclose(rotation_to_quaternion(np.eye(3)), [1, 0, 0, 0], atol=1e-12)
    half_turn_z = np.diag([-1.0, -1.0, 1.0])
    assert np.allclose(rotation_to_quaternion(half_turn_z), [0, 0, 0, 1], atol=1e-12)
    try:
        rotation_to_quaternion(np.diag([1.0, 1.0, -1.0]))
        assert False, "a reflection is not a rotation"
    except NotARotationError:
        pass


def test_quaternion_round_trip():
    R = Rotation.random(10000, 0).as_matrix()
    Q = rotations_to_quaternions(R)
    assert np.abs(np.linalg.norm(Q, axis=1) - 1.0).max() < 1e-12
    back = np.stack([quaternion_to_rotation(q) for q in Q])
    frob = np.linalg.norm(back - R, axis=(1, 2))
    assert frob.max() < 1e-9

    # scipy stores (x, y, z, w)
    xyzw = Rotation.from_matrix(R).as_quat()
    reference = np.array([canonicalize_quaternion(np.roll(q, 1)) for q in xyzw])
    assert np.abs(reference - Q).max() < 1e-9


def test_canonicalize():
    assert np.array_equal(canonicalize_quaternion([-1, 0, 0, 0]), [1, 0, 0, 0])
    assert np.array_equal(canonicalize_quaternion([0, -1, 0, 0]), [0, 1, 0, 0])
    rng = np.random.default_rng(14)
    for _ in range(100):
        q = rng.normal(size=4)
        assert np.allclose(quaternion_to_rotation(canonicalize_quaternion(q)), quaternion_to_rotation(q),
                           atol=1e-12)
    try:
        canonicalize_quaternion([0, 0, 0, 0])
        assert False, "zero quaternion should be rejected"
    except ZeroQuaternionError:
        pass


def test_single_branch_matches_stable_conversion():
    rng = np.random.default_rng(15)
    checked = 0
    for _ in range(300):
        frame = compute_body_frame(random_pose(rng))
        if 1.0 - frame.r[0] - frame.u[1] - frame.f[2] <= 0.1:
            continue
        q = single_branch_quaternion(frame.r, frame.u, frame.f)
        assert np.abs(q - frame.q).max() < 1e-9
        checked += 1
    assert checked > 50


def test_viewpoint_matches_direction():
    rng = np.random.default_rng(16)
    for _ in range(200):
        az = rng.uniform(-179.0, 180.0)
        el = rng.uniform(-89.0, 89.0)
        v = body_view_direction(az, el)
        G = Rotation.random(None, int(rng.integers(1 << 31))).as_matrix()
        frame = BodyFrame(r=G[:, 0], u=G[:, 1], f=G[:, 2], q=np.array([1.0, 0, 0, 0]))
        to_camera = v[0] * frame.r + v[1] * frame.u + v[2] * frame.f
        pelvis = -2500.0 * to_camera
        view = viewpoint_from_frame(frame, pelvis)
        assert abs(view.azimuth - az) < 1e-6 and abs(view.elevation - el) < 1e-6

    R, _, _ = compute_body_frames(np.stack([FACING.joints, FACING_RIGHT.joints]))
    az, el = viewpoints_from_rotations(R, np.array([[0, 0, 4000.0], [0, 0, 4000.0]]))
    assert np.allclose(az, [0.0, 90.0], atol=1e-9) and np.allclose(el, 0.0, atol=1e-9)


def main():
    """Run all tests"""
    print("🧪 Body Frame - Test Suite")
    print("=" * 50)

    tests = [
        ("Facing Camera Identity", test_facing_camera_is_identity),
        ("Facing Camera Right", test_facing_camera_right),
        ("Pole Convention", test_pole_convention),
        ("Degenerate Frame", test_degenerate_frame),
        ("Frames Are Rotations", test_frames_are_rotations),
        ("Equivariance", test_equivariance),
        ("Body Centered", test_body_centered_has_identity_frame),
        ("Rotation To Quaternion", test_rotation_to_quaternion_examples),
        ("Quaternion Round Trip", test_quaternion_round_trip),
        ("Canonicalize", test_canonicalize),
        ("Single Branch Conversion", test_single_branch_matches_stable_conversion),
        ("Viewpoint Direction", test_viewpoint_matches_direction),
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
