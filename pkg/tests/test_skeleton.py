import numpy as np
import pytest

from keyflow import rotmath, skeleton
from keyflow.errors import BadLength
from keyflow.skeleton import PoseFrame, default_skeleton


def random_pose(rng):
    q = rng.standard_normal((skeleton.NUM_JOINTS, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return PoseFrame(rotmath.matrix_to_rot6d(rotmath.quat_to_matrix(q)))


class TestDefaultSkeleton:
    def test_counts_and_topology(self):
        skel = default_skeleton()
        assert skel.num_joints == 41
        assert np.sum(skel.parents < 0) == 1
        assert skel.parents[0] == -1
        for j, p in enumerate(skel.parents):
            if p >= 0:
                assert p < j
        assert np.all(np.isfinite(skel.offsets))

    def test_hand_roots_attach_to_wrists(self):
        skel = default_skeleton()
        assert skel.names[skeleton.LEFT_WRIST] == "l_wrist"
        assert skel.names[skeleton.RIGHT_WRIST] == "r_wrist"
        # first joint of each hand block parents to the matching wrist
        assert skel.parents[11] == skeleton.LEFT_WRIST
        assert skel.parents[26] == skeleton.RIGHT_WRIST
        for f in range(5):
            assert skel.parents[11 + 3 * f] == skeleton.LEFT_WRIST
            assert skel.parents[26 + 3 * f] == skeleton.RIGHT_WRIST

    def test_deterministic(self):
        a, b = default_skeleton(), default_skeleton()
        assert a.names == b.names
        assert np.array_equal(a.parents, b.parents)
        assert np.array_equal(a.offsets, b.offsets)

    def test_json_document(self):
        doc = default_skeleton().to_json_dict()
        assert doc["v"] == 1
        assert len(doc["joints"]) == 41
        assert doc["joints"][0] == {"name": "root", "parent": -1, "offset": [0.0, 0.0, 0.0]}


class TestFlatten:
    def test_round_trip_bitwise(self):
        rng = np.random.default_rng(0)
        pose = random_pose(rng)
        v = skeleton.flatten(pose)
        assert v.shape == (246,)
        back = skeleton.unflatten(v)
        assert np.array_equal(back.rot6d, pose.rot6d)

    def test_identity_pose_blocks(self):
        v = skeleton.flatten(PoseFrame.identity())
        assert np.array_equal(v.reshape(41, 6), np.tile([1, 0, 0, 0, 1, 0], (41, 1)))

    def test_bad_length(self):
        with pytest.raises(BadLength):
            skeleton.unflatten(np.zeros(245))

    def test_hand_slices(self):
        rng = np.random.default_rng(1)
        pose = random_pose(rng)
        v = skeleton.flatten(pose)
        assert np.array_equal(v[skeleton.BODY_SLICE].reshape(11, 6), pose.body)
        assert np.array_equal(v[skeleton.LEFT_HAND_SLICE].reshape(15, 6), pose.left_hand)
        assert np.array_equal(v[skeleton.RIGHT_HAND_SLICE].reshape(15, 6), pose.right_hand)


class TestForwardKinematics:
    def test_rest_pose_is_cumulative_offsets(self):
        skel = default_skeleton()
        pos = skeleton.forward_kinematics(PoseFrame.identity(), skel)
        expected = np.zeros((41, 3))
        for j, p in enumerate(skel.parents):
            if p >= 0:
                expected[j] = expected[p] + skel.offsets[j]
        assert np.allclose(pos, expected, atol=1e-12)
        assert np.array_equal(pos[0], np.zeros(3))

    def test_left_shoulder_90z_two_bone_arm(self):
        skel = default_skeleton()
        pose = PoseFrame.identity()
        z90 = rotmath.matrix_to_rot6d(
            rotmath.axis_angle_to_matrix(np.array([0.0, 0.0, 1.0]), np.pi / 2)
        )
        pose.rot6d[4] = z90  # l_shoulder
        pos = skeleton.forward_kinematics(pose, skel)
        shoulder, elbow, wrist = pos[4], pos[5], pos[6]
        assert np.allclose(elbow, shoulder + [0.0, 0.25, 0.0], atol=1e-12)
        assert np.allclose(wrist, shoulder + [0.0, 0.5, 0.0], atol=1e-12)

    def test_root_rotation_is_global(self):
        skel = default_skeleton()
        rng = np.random.default_rng(4)
        pose = random_pose(rng)
        base = skeleton.forward_kinematics(pose, skel)

        g = rotmath.axis_angle_to_matrix(np.array([1.0, 2.0, 0.5]), 1.1)
        rotated = PoseFrame(pose.rot6d.copy())
        rotated.rot6d[0] = rotmath.matrix_to_rot6d(g @ rotmath.rot6d_to_matrix(pose.rot6d[0]))
        pos = skeleton.forward_kinematics(rotated, skel)
        assert np.allclose(pos, base @ g.T, atol=1e-9)
        assert np.allclose(pos[0], 0.0)

    def test_bone_lengths_preserved(self):
        skel = default_skeleton()
        rng = np.random.default_rng(5)
        frames = np.stack([skeleton.flatten(random_pose(rng)) for _ in range(8)])
        pos = skeleton.fk_sequence(frames, skel)
        for j, p in enumerate(skel.parents):
            if p >= 0:
                lengths = np.linalg.norm(pos[:, j] - pos[:, p], axis=-1)
                assert np.allclose(lengths, np.linalg.norm(skel.offsets[j]), atol=1e-9)

    def test_fk_sequence_matches_single(self):
        skel = default_skeleton()
        rng = np.random.default_rng(6)
        poses = [random_pose(rng) for _ in range(4)]
        frames = np.stack([skeleton.flatten(p) for p in poses])
        batch = skeleton.fk_sequence(frames, skel)
        for i, p in enumerate(poses):
            assert np.allclose(batch[i], skeleton.forward_kinematics(p, skel), atol=1e-12)
