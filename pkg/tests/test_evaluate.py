"""Trajectory alignment and error metrics.

The ATE oracle is statistical: isotropic Gaussian position noise of
sigma per axis leaves an expected RMSE of sigma * sqrt(3) after
alignment, which a Monte Carlo run must reproduce.
"""

import numpy as np
import pytest

from surfelio.core import Pose, Rotation
from surfelio.errors import EvaluationError
from surfelio.evaluate import ate_rmse, match_by_time, rigid_align
from surfelio.formats import Trajectory


def helix_positions(n=200):
    t = np.linspace(0.0, 12.0, n)
    return np.stack([3.0 * np.cos(t), 3.0 * np.sin(t), 0.2 * t], axis=1)


def as_trajectory(times, positions):
    traj = Trajectory()
    for t, p in zip(times, positions):
        traj.append(float(t), Pose(Rotation.identity(), p))
    return traj


class TestRigidAlign:
    def test_recovers_known_transform(self, rng):
        src = helix_positions()
        R_true = Rotation.exp((0.3, -0.5, 0.9)).as_matrix()
        t_true = np.array([4.0, -2.0, 1.5])
        dst = src @ R_true.T + t_true
        R, t = rigid_align(src, dst)
        np.testing.assert_allclose(R, R_true, atol=1e-12)
        np.testing.assert_allclose(t, t_true, atol=1e-12)
        assert np.isclose(np.linalg.det(R), 1.0)

    def test_never_returns_a_reflection(self, rng):
        # nearly planar cloud: the SVD is tempted by det = -1
        src = rng.normal(0, 1.0, (50, 3)) * np.array([1.0, 1.0, 1e-9])
        dst = -src[:, [1, 0, 2]]
        R, _ = rigid_align(src, dst)
        assert np.isclose(np.linalg.det(R), 1.0)


class TestMatchByTime:
    def test_nearest_neighbor_pairing(self):
        truth = as_trajectory([0.0, 1.0, 2.0, 3.0],
                              np.arange(12.0).reshape(4, 3))
        est = as_trajectory([0.996, 2.004], np.ones((2, 3)))
        est_p, gt_p = match_by_time(est, truth, max_dt=0.01)
        assert len(est_p) == 2
        np.testing.assert_array_equal(gt_p, truth.positions[[1, 2]])

    def test_max_dt_drops_pairs(self):
        truth = as_trajectory([0.0, 1.0], np.zeros((2, 3)))
        est = as_trajectory([0.5], np.zeros((1, 3)))
        est_p, _ = match_by_time(est, truth, max_dt=0.01)
        assert len(est_p) == 0

    def test_empty_inputs(self):
        est_p, gt_p = match_by_time(Trajectory(), Trajectory())
        assert est_p.shape == (0, 3) and gt_p.shape == (0, 3)


class TestAteRmse:
    def test_zero_error_after_rigid_offset(self):
        times = np.linspace(0.0, 10.0, 100)
        truth_p = helix_positions(100)
        offset = Pose(Rotation.exp((0.1, 0.2, -0.4)), (5.0, 6.0, -7.0))
        est_p = np.stack([offset.apply(p) for p in truth_p])
        err = ate_rmse(as_trajectory(times, est_p),
                       as_trajectory(times, truth_p))
        assert err < 1e-9

    def test_gaussian_noise_gives_sigma_sqrt3(self, rng):
        """Monte Carlo: per-axis sigma leaves RMSE ~ sigma * sqrt(3)."""
        sigma = 0.05
        times = np.linspace(0.0, 10.0, 400)
        truth_p = helix_positions(400)
        rmses = [ate_rmse(as_trajectory(times,
                                        truth_p + rng.normal(0, sigma,
                                                             truth_p.shape)),
                          as_trajectory(times, truth_p))
                 for _ in range(20)]
        want = sigma * np.sqrt(3.0)
        assert abs(np.mean(rmses) - want) < 0.05 * want

    def test_too_few_matches_raises(self):
        times = [0.0, 1.0]
        pts = np.zeros((2, 3))
        with pytest.raises(EvaluationError):
            ate_rmse(as_trajectory(times, pts), as_trajectory(times, pts))

    def test_disjoint_time_ranges_raise(self):
        a = as_trajectory(np.linspace(0, 1, 10), helix_positions(10))
        b = as_trajectory(np.linspace(50, 51, 10), helix_positions(10))
        with pytest.raises(EvaluationError):
            ate_rmse(a, b)
