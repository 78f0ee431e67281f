import numpy as np
import pytest

from keyflow import rotmath
from keyflow.errors import DegenerateRotation, ParameterOutOfRange


def random_quat(rng, n=None):
    shape = (4,) if n is None else (n, 4)
    q = rng.standard_normal(shape)
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return np.where(q[..., 0:1] < 0, -q, q)


def random_matrix(rng, n=None):
    return rotmath.quat_to_matrix(random_quat(rng, n))


ROT_Z90 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])


class TestRot6dToMatrix:
    def test_identity(self):
        m = rotmath.rot6d_to_matrix([1, 0, 0, 0, 1, 0])
        assert np.allclose(m, np.eye(3), atol=1e-12)

    def test_z90_hand_applied_gram_schmidt(self):
        # columns (0,1,0), (-1,0,0), cross -> (0,0,1): a 90 degree turn about z
        m = rotmath.rot6d_to_matrix([0, 1, 0, -1, 0, 0])
        assert np.allclose(m, ROT_Z90, atol=1e-12)
        assert np.allclose(m @ m.T, np.eye(3), atol=1e-12)

    def test_scale_removed(self):
        m = rotmath.rot6d_to_matrix([2, 0, 0, 0, 3, 0])
        assert np.allclose(m, np.eye(3), atol=1e-12)

    def test_zero_first_column_degenerate(self):
        with pytest.raises(DegenerateRotation):
            rotmath.rot6d_to_matrix([0, 0, 0, 0, 1, 0])

    def test_parallel_columns_degenerate(self):
        with pytest.raises(DegenerateRotation):
            rotmath.rot6d_to_matrix([1, 0, 0, 2, 0, 0])

    def test_always_proper_rotation(self):
        rng = np.random.default_rng(11)
        r = rng.standard_normal((200, 6))
        m = rotmath.rot6d_to_matrix(r)
        eye = np.broadcast_to(np.eye(3), m.shape)
        assert np.allclose(m @ np.swapaxes(m, -1, -2), eye, atol=1e-9)
        assert np.allclose(np.linalg.det(m), 1.0, atol=1e-9)


class TestMatrixToRot6d:
    def test_identity(self):
        assert np.array_equal(rotmath.matrix_to_rot6d(np.eye(3)), [1, 0, 0, 0, 1, 0])

    def test_z90_reads_first_two_columns(self):
        assert np.allclose(rotmath.matrix_to_rot6d(ROT_Z90), [0, 1, 0, -1, 0, 0])

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        m = random_matrix(rng, 1000)
        back = rotmath.rot6d_to_matrix(rotmath.matrix_to_rot6d(m))
        assert np.max(np.abs(back - m)) < 1e-6


class TestQuat:
    def test_matrix_quat_round_trip(self):
        rng = np.random.default_rng(42)
        q = random_quat(rng, 1000)
        q2 = rotmath.matrix_to_quat(rotmath.quat_to_matrix(q))
        assert np.max(np.abs(q2 - q)) < 1e-9

    def test_quat_round_trip_near_pi(self):
        # rotations by ~180 degrees stress the conversion branches
        rng = np.random.default_rng(3)
        axis = rng.standard_normal((200, 3))
        axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
        angle = np.pi - rng.uniform(0, 1e-5, 200)
        m = rotmath.axis_angle_to_matrix(axis, angle)
        m2 = rotmath.quat_to_matrix(rotmath.matrix_to_quat(m))
        assert np.max(np.abs(m2 - m)) < 1e-9

    def test_unit_norm_and_sign(self):
        rng = np.random.default_rng(7)
        q = rotmath.matrix_to_quat(random_matrix(rng, 500))
        assert np.allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-9)
        assert np.all(q[:, 0] >= 0.0)


class TestQuatSlerp:
    def test_identical_endpoints(self):
        rng = np.random.default_rng(1)
        q = random_quat(rng)
        assert np.allclose(rotmath.quat_slerp(q, q, 0.5), q, atol=1e-12)

    def test_half_of_z90_is_z45(self):
        q0 = np.array([1.0, 0, 0, 0])
        q1 = rotmath.matrix_to_quat(ROT_Z90)
        mid = rotmath.quat_slerp(q0, q1, 0.5)
        expected = np.array([np.cos(np.pi / 8), 0, 0, np.sin(np.pi / 8)])
        assert np.allclose(mid, expected, atol=1e-12)

    def test_endpoints_exact(self):
        rng = np.random.default_rng(2)
        q0, q1 = random_quat(rng), random_quat(rng)
        assert np.array_equal(rotmath.quat_slerp(q0, q1, 0.0), q0)
        assert np.array_equal(rotmath.quat_slerp(q0, q1, 1.0), q1)

    def test_constant_angular_velocity(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            q0, q1 = random_quat(rng), random_quat(rng)
            total = 2 * np.arccos(np.clip(abs(np.dot(q0, q1)), -1, 1))
            for t in (0.25, 0.5, 0.75):
                qt = rotmath.quat_slerp(q0, q1, t)
                a = 2 * np.arccos(np.clip(abs(np.dot(q0, qt)), -1, 1))
                assert abs(a - t * total) < 1e-5


class TestSlerpRot6d:
    def test_same_input_any_t(self):
        rng = np.random.default_rng(9)
        r = rotmath.matrix_to_rot6d(random_matrix(rng))
        for t in (0.0, 0.3, 1.0):
            assert np.allclose(rotmath.slerp_rot6d(r, r, t), r, atol=1e-6)

    def test_midpoint_matches_quaternion_oracle(self):
        a = rotmath.identity_rot6d()
        b = rotmath.matrix_to_rot6d(ROT_Z90)
        mid = rotmath.slerp_rot6d(a, b, 0.5)
        q45 = np.array([np.cos(np.pi / 8), 0, 0, np.sin(np.pi / 8)])
        expected = rotmath.matrix_to_rot6d(rotmath.quat_to_matrix(q45))
        assert np.allclose(mid, expected, atol=1e-9)

    def test_out_of_range_t(self):
        r = rotmath.identity_rot6d()
        with pytest.raises(ParameterOutOfRange):
            rotmath.slerp_rot6d(r, r, -1e-9)
        with pytest.raises(ParameterOutOfRange):
            rotmath.slerp_rot6d(r, r, 1.0 + 1e-9)

    def test_endpoints_within_tolerance(self):
        rng = np.random.default_rng(12)
        a = rotmath.matrix_to_rot6d(random_matrix(rng))
        b = rotmath.matrix_to_rot6d(random_matrix(rng))
        assert np.max(np.abs(rotmath.slerp_rot6d(a, b, 0.0) - a)) < 1e-6
        assert np.max(np.abs(rotmath.slerp_rot6d(a, b, 1.0) - b)) < 1e-6

    def test_angle_scales_linearly(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            ma, mb = random_matrix(rng), random_matrix(rng)
            a, b = rotmath.matrix_to_rot6d(ma), rotmath.matrix_to_rot6d(mb)
            total = rotmath.rotation_angle(ma.T @ mb)
            for t in (0.2, 0.5, 0.9):
                mt = rotmath.rot6d_to_matrix(rotmath.slerp_rot6d(a, b, t))
                assert abs(rotmath.rotation_angle(ma.T @ mt) - t * total) < 1e-5


def test_axis_angle_matches_quaternion_construction():
    rng = np.random.default_rng(21)
    axis = rng.standard_normal((100, 3))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(0, np.pi, 100)
    m = rotmath.axis_angle_to_matrix(axis, angle)
    q = np.concatenate([np.cos(angle / 2)[:, None], np.sin(angle / 2)[:, None] * axis], axis=1)
    assert np.max(np.abs(m - rotmath.quat_to_matrix(q))) < 1e-12
    assert np.max(np.abs(rotmath.rotation_angle(m) - angle)) < 1e-7
