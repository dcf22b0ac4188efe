import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wislam.errors import InvalidInputError
from wislam.geometry import (
    Pose,
    Tangent6,
    odom_compose,
    odom_predict,
    quat_exp,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_multiply,
    quat_relative,
    rotation_matrix,
    tangent_basis,
    unit_dir,
    wrap_angle,
)

from conftest import random_unit_quat

finite = st.floats(-1e3, 1e3, allow_nan=False)
quat_raw = arrays(np.float64, 4, elements=st.floats(-1, 1, allow_nan=False)).filter(lambda v: np.linalg.norm(v) > 1e-3)


def _unit(v):
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    return v if v[3] >= 0 else -v


def axis_angle_matrix(axis, angle):
    # Rodrigues formula as an independent oracle
    k = np.asarray(axis, float) / np.linalg.norm(axis)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


class TestRotationMatrix:
    def test_identity(self):
        assert np.array_equal(rotation_matrix([0, 0, 0, 1]), np.eye(3))

    def test_quarter_turn_about_z(self):
        R = rotation_matrix(quat_from_axis_angle([0, 0, 1], np.pi / 2))
        np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    def test_matches_rodrigues(self, rng):
        for _ in range(20):
            axis, ang = rng.normal(size=3), rng.uniform(-np.pi, np.pi)
            np.testing.assert_allclose(rotation_matrix(quat_from_axis_angle(axis, ang)), axis_angle_matrix(axis, ang),
                                       atol=1e-12)

    @given(quat_raw)
    def test_orthonormal(self, q):
        R = rotation_matrix(_unit(q))
        assert np.linalg.norm(R @ R.T - np.eye(3)) < 1e-9
        assert abs(np.linalg.det(R) - 1) < 1e-9

    def test_rejects_non_unit(self):
        with pytest.raises(InvalidInputError):
            rotation_matrix([0, 0, 0, 1.1])


class TestQuatRelative:
    def test_self_is_identity(self, rng):
        for _ in range(10):
            q = random_unit_quat(rng)
            np.testing.assert_allclose(quat_relative(q, q), [0, 0, 0, 1], atol=1e-12)

    def test_quarter_turn(self):
        r = quat_relative([0, 0, 0, 1], quat_from_axis_angle([0, 0, 1], np.pi / 2))
        np.testing.assert_allclose(r[:3], [0, 0, np.sin(np.pi / 4)], atol=1e-12)
        # composition oracle through rotation matrices
        np.testing.assert_allclose(rotation_matrix(r), axis_angle_matrix([0, 0, 1], np.pi / 2), atol=1e-12)

    def test_round_trip(self, rng):
        for _ in range(20):
            qa, qb = random_unit_quat(rng), random_unit_quat(rng)
            back = quat_multiply(qa, quat_relative(qa, qb))
            assert min(np.abs(back - qb).max(), np.abs(back + qb).max()) < 1e-9

    def test_canonical(self, rng):
        for _ in range(20):
            assert quat_relative(random_unit_quat(rng), random_unit_quat(rng))[3] >= 0


class TestPose:
    def test_canonicalizes_sign(self):
        p = Pose([0, 0, 0], [0, 0, -0.6, -0.8])
        np.testing.assert_allclose(p.q, [0, 0, 0.6, 0.8])

    @given(quat_raw)
    def test_unit_after_construction(self, q):
        p = Pose([0, 0, 0], q / np.linalg.norm(q))
        assert abs(np.linalg.norm(p.q) - 1) < 1e-9 and p.q[3] >= 0

    def test_immutable(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.t[0] = 1.0

    def test_equality_identifies_sign(self):
        assert Pose([1, 2, 3], [0, 0, 0, 1]) == Pose([1, 2, 3], [0, 0, 0, -1])


class TestOdometry:
    def test_same_pose_is_zero(self, rng):
        p = Pose(rng.normal(size=3), random_unit_quat(rng))
        z = odom_predict(p, p)
        np.testing.assert_allclose(z.as_vector(), 0, atol=1e-12)

    def test_pure_translation(self):
        z = odom_predict(Pose.identity(), Pose([1, 0, 0], [0, 0, 0, 1]))
        np.testing.assert_allclose(z.dt, [1, 0, 0])
        np.testing.assert_allclose(z.dr, [0, 0, 0])

    def test_rotated_source_frame(self):
        pi = Pose([0, 0, 0], quat_from_yaw(np.pi / 2))
        z = odom_predict(pi, Pose([1, 0, 0], quat_from_yaw(np.pi / 2)))
        np.testing.assert_allclose(z.dt, [0, -1, 0], atol=1e-15)

    def test_compose_zero_is_identity(self, rng):
        p = Pose(rng.normal(size=3), random_unit_quat(rng))
        q = odom_compose(p, Tangent6.zero())
        np.testing.assert_allclose(q.t, p.t, atol=1e-15)
        np.testing.assert_allclose(q.q, p.q, atol=1e-15)

    def test_four_unit_steps(self):
        p = Pose.identity()
        for _ in range(4):
            p = odom_compose(p, Tangent6([1, 0, 0], [0, 0, 0]))
        np.testing.assert_allclose(p.t, [4, 0, 0])

    def test_round_trip_random(self, rng):
        for _ in range(100):
            p = Pose(rng.normal(size=3) * 10, random_unit_quat(rng))
            dr = random_unit_quat(rng)[:3]
            z = Tangent6(rng.normal(size=3), dr)
            back = odom_predict(p, odom_compose(p, z))
            np.testing.assert_allclose(back.as_vector(), z.as_vector(), atol=1e-9)

    @settings(max_examples=50)
    @given(arrays(np.float64, 3, elements=finite), quat_raw, arrays(np.float64, 3, elements=finite), quat_raw)
    def test_predict_then_compose(self, ti, qi, tj, qj):
        pi, pj = Pose(ti, _unit(qi)), Pose(tj, _unit(qj))
        back = odom_compose(pi, odom_predict(pi, pj))
        np.testing.assert_allclose(back.t, pj.t, atol=1e-9 * (1 + np.abs(ti).max() + np.abs(tj).max()))
        # compare rotations, since q and -q coincide when w = 0; recovering w = sqrt(1 - |dr|^2)
        # near a half turn costs about sqrt(machine eps) of accuracy
        w = abs(quat_relative(pi.q, pj.q)[3])
        np.testing.assert_allclose(back.R, pj.R, atol=1e-9 if w > 1e-3 else 1e-7)

    def test_invalid_dr(self):
        with pytest.raises(InvalidInputError):
            Tangent6([0, 0, 0], [1, 1, 0])


class TestTangentBasis:
    def test_z_axis(self):
        b1, b2 = tangent_basis([0, 0, 1])
        np.testing.assert_array_equal(b1, [1, 0, 0])
        np.testing.assert_array_equal(b2, [0, 1, 0])

    def test_x_axis_spans_yz(self):
        b1, b2 = tangent_basis([1, 0, 0])
        # Gram-Schmidt from the seed axis y (first least-aligned axis)
        np.testing.assert_allclose(b1, [0, 1, 0])
        np.testing.assert_allclose(b2, [0, 0, 1])

    @given(arrays(np.float64, 3, elements=st.floats(-1, 1, allow_nan=False)).filter(lambda v: np.linalg.norm(v) > 1e-3))
    def test_right_handed_orthonormal(self, v):
        u = unit_dir(v)
        b1, b2 = tangent_basis(u)
        M = np.stack([b1, b2, u])
        np.testing.assert_allclose(M @ M.T, np.eye(3), atol=1e-9)
        assert np.linalg.det(M) > 0

    def test_deterministic(self, rng):
        u = unit_dir(rng.normal(size=3))
        a, b = tangent_basis(u), tangent_basis(u.copy())
        assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_quat_exp_small_angle():
    q = quat_exp([1e-9, 0, 0])
    assert abs(np.linalg.norm(q) - 1) < 1e-15
    np.testing.assert_allclose(q[:3], [5e-10, 0, 0])


@given(st.floats(-1e4, 1e4, allow_nan=False))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -np.pi <= w < np.pi
    assert abs(np.sin(w) - np.sin(a)) < 1e-6 and abs(np.cos(w) - np.cos(a)) < 1e-6
