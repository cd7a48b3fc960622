"""SO(3)/SE(3) primitives and the error-state box operators.

The rotation checks lean on two independent oracles: explicit Rodrigues
matrices for exp, and central finite differences for the right Jacobian.
"""

import numpy as np
import pytest

from surfelio.core import (
    ERROR_DIM,
    NavState,
    Pose,
    Rotation,
    box_minus,
    box_plus,
    so3_hat,
    so3_right_jacobian,
    so3_right_jacobian_inv,
)


def rodrigues(phi):
    """Reference rotation matrix straight from the Rodrigues formula."""
    phi = np.asarray(phi, dtype=float)
    angle = np.linalg.norm(phi)
    if angle < 1e-12:
        return np.eye(3) + so3_hat(phi)
    axis = phi / angle
    K = so3_hat(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def random_state(rng) -> NavState:
    return NavState(
        rotation=Rotation.exp(rng.normal(0, 1, 3)),
        position=rng.normal(0, 5, 3),
        velocity=rng.normal(0, 2, 3),
        gyro_bias=rng.normal(0, 0.01, 3),
        accel_bias=rng.normal(0, 0.1, 3),
        gravity=rng.normal(0, 1, 3) + np.array([0, 0, -9.81]),
    )


# ---------------------------------------------------------------------------
# rotations


def test_exp_matches_rodrigues(rng):
    for _ in range(200):
        phi = rng.normal(0, 1.2, 3)
        np.testing.assert_allclose(
            Rotation.exp(phi).as_matrix(), rodrigues(phi), atol=1e-12)


def test_exp_log_round_trip(rng):
    for scale in (1e-8, 1e-3, 0.5, 2.0, 3.1):
        for _ in range(50):
            phi = rng.normal(0, 1, 3)
            phi = phi / np.linalg.norm(phi) * scale * rng.uniform(0.1, 1.0)
            back = Rotation.exp(phi).log()
            np.testing.assert_allclose(back, phi, atol=1e-9)


def test_exp_zero_is_identity():
    np.testing.assert_allclose(
        Rotation.exp(np.zeros(3)).as_matrix(), np.eye(3), atol=0)


def test_composition_matches_matrix_product(rng):
    for _ in range(50):
        a = Rotation.exp(rng.normal(0, 1, 3))
        b = Rotation.exp(rng.normal(0, 1, 3))
        np.testing.assert_allclose(
            (a * b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


def test_apply_and_inverse(rng):
    r = Rotation.exp(rng.normal(0, 1, 3))
    v = rng.normal(0, 3, (10, 3))
    np.testing.assert_allclose(r.apply(v), v @ r.as_matrix().T, atol=1e-12)
    np.testing.assert_allclose(
        r.inverse().apply(r.apply(v)), v, atol=1e-12)


def test_from_matrix_round_trip(rng):
    for _ in range(50):
        r = Rotation.exp(rng.normal(0, 1.5, 3))
        again = Rotation.from_matrix(r.as_matrix())
        assert r.angle_to(again) < 1e-10


def test_angle_to(rng):
    a = Rotation.exp(rng.normal(0, 1, 3))
    phi = np.array([0.3, -0.1, 0.2])
    b = a * Rotation.exp(phi)
    assert a.angle_to(b) == pytest.approx(np.linalg.norm(phi), abs=1e-10)
    assert a.angle_to(a) == pytest.approx(0.0, abs=1e-12)


def test_slerp_endpoints_and_midpoint():
    a = Rotation.exp((0.0, 0.0, 0.0))
    b = Rotation.exp((0.0, 0.0, 1.0))
    assert a.slerp(b, 0.0).angle_to(a) < 1e-12
    assert a.slerp(b, 1.0).angle_to(b) < 1e-12
    mid = a.slerp(b, 0.5)
    np.testing.assert_allclose(mid.log(), [0.0, 0.0, 0.5], atol=1e-12)


def test_hat_is_cross_product(rng):
    v = rng.normal(0, 1, 3)
    w = rng.normal(0, 1, 3)
    np.testing.assert_allclose(so3_hat(v) @ w, np.cross(v, w), atol=1e-14)
    np.testing.assert_allclose(so3_hat(v).T, -so3_hat(v), atol=0)


def test_right_jacobian_against_finite_differences(rng):
    """exp(phi + d) == exp(phi) * exp(Jr(phi) d) to first order."""
    h = 1e-6
    for _ in range(100):
        phi = rng.normal(0, 1.0, 3)
        J = so3_right_jacobian(phi)
        J_fd = np.empty((3, 3))
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            dplus = (Rotation.exp(phi).inverse() * Rotation.exp(phi + e)).log()
            dminus = (Rotation.exp(phi).inverse() * Rotation.exp(phi - e)).log()
            J_fd[:, i] = (dplus - dminus) / (2 * h)
        np.testing.assert_allclose(J, J_fd, atol=1e-7)


def test_right_jacobian_inverse(rng):
    for _ in range(50):
        phi = rng.normal(0, 1.0, 3)
        prod = so3_right_jacobian(phi) @ so3_right_jacobian_inv(phi)
        np.testing.assert_allclose(prod, np.eye(3), atol=1e-10)
    # tiny-angle branch
    np.testing.assert_allclose(
        so3_right_jacobian(np.zeros(3)), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(
        so3_right_jacobian_inv(np.full(3, 1e-10)), np.eye(3), atol=1e-9)


# ---------------------------------------------------------------------------
# poses


def test_pose_compose_apply_inverse(rng):
    a = Pose(Rotation.exp(rng.normal(0, 1, 3)), rng.normal(0, 2, 3))
    b = Pose(Rotation.exp(rng.normal(0, 1, 3)), rng.normal(0, 2, 3))
    pts = rng.normal(0, 3, (7, 3))
    np.testing.assert_allclose(
        (a * b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)
    np.testing.assert_allclose(
        (a.inverse() * a).apply(pts), pts, atol=1e-10)
    np.testing.assert_allclose(a.matrix()[:3, :3], a.rotation.as_matrix())
    again = Pose.from_matrix(a.matrix())
    np.testing.assert_allclose(again.translation, a.translation, atol=1e-12)


# ---------------------------------------------------------------------------
# error-state operators


def test_box_plus_minus_round_trip(rng):
    for _ in range(100):
        x = random_state(rng)
        delta = rng.normal(0, 0.3, ERROR_DIM)
        np.testing.assert_allclose(
            box_minus(box_plus(x, delta), x), delta, atol=1e-9)


def test_box_minus_self_is_zero(rng):
    x = random_state(rng)
    np.testing.assert_allclose(box_minus(x, x), np.zeros(ERROR_DIM), atol=1e-12)


def test_box_plus_zero_is_identity(rng):
    x = random_state(rng)
    y = box_plus(x, np.zeros(ERROR_DIM))
    assert x.rotation.angle_to(y.rotation) < 1e-15
    np.testing.assert_allclose(y.position, x.position, atol=0)
    np.testing.assert_allclose(y.gravity, x.gravity, atol=0)


def test_navstate_pose(rng):
    x = random_state(rng)
    pose = x.pose()
    np.testing.assert_allclose(pose.translation, x.position, atol=0)
    assert pose.rotation.angle_to(x.rotation) < 1e-12
