"""Trajectory comparison: absolute trajectory error after rigid alignment."""

import numpy as np

from .errors import EvaluationError
from .formats import Trajectory


def match_by_time(estimate: Trajectory, truth: Trajectory,
                  max_dt: float = 0.010):
    """Pair each estimate pose with the nearest-in-time truth pose.

    Pairs further apart than ``max_dt`` seconds are dropped.  Returns two
    (N, 3) position arrays (estimate, truth).
    """
    te, tt = estimate.timestamps, truth.timestamps
    if len(te) == 0 or len(tt) == 0:
        return np.empty((0, 3)), np.empty((0, 3))
    idx = np.searchsorted(tt, te)
    idx = np.clip(idx, 1, len(tt) - 1) if len(tt) > 1 else np.zeros_like(idx)
    left = np.maximum(idx - 1, 0)
    pick = np.where(np.abs(tt[idx] - te) < np.abs(tt[left] - te), idx, left)
    ok = np.abs(tt[pick] - te) <= max_dt
    return estimate.positions[ok], truth.positions[pick[ok]]


def rigid_align(source: np.ndarray, target: np.ndarray):
    """Least-squares rotation + translation taking source onto target.

    Closed-form point-set alignment via SVD of the cross-covariance, with
    the usual determinant correction; no scale factor.
    """
    src = np.asarray(source, dtype=float)
    dst = np.asarray(target, dtype=float)
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    cov = (dst - mu_d).T @ (src - mu_s) / len(src)
    U, _, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0.0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    t = mu_d - R @ mu_s
    return R, t


def ate_rmse(estimate: Trajectory, truth: Trajectory,
             max_dt: float = 0.010) -> float:
    """Root-mean-square absolute trajectory error, in meters.

    Matches poses by nearest timestamp (within ``max_dt``), removes the
    best rigid transform between the matched position sets, and returns
    the RMSE of the remaining position residual norms.
    """
    est_p, gt_p = match_by_time(estimate, truth, max_dt)
    if len(est_p) < 3:
        raise EvaluationError(
            f"only {len(est_p)} matched pose pairs (need at least 3)")
    R, t = rigid_align(est_p, gt_p)
    resid = (est_p @ R.T + t) - gt_p
    return float(np.sqrt(np.mean(np.sum(resid * resid, axis=1))))
