"""Iterated error-state Kalman update for point-to-plane constraints.

Each correspondence contributes a scalar residual — the signed distance
of the world-frame point to its matched plane — whose Jacobian is nonzero
only in the rotation and position blocks of the 18-dim error state.  The
update iterates a MAP step: the stacked measurement rows are combined
with the prior term pulling back to the prediction through the manifold
difference, all in the 18-dim information form, so nothing of measurement
dimension is ever inverted.
"""

from dataclasses import dataclass

import numpy as np

from .core import (ERROR_DIM, POS, ROT, NavState, Pose, box_minus, box_plus,
                   so3_right_jacobian_inv)
from .imu import FilterState


def residual_and_jacobian(nav: NavState, extrinsic: Pose, point_lidar,
                          normal, anchor):
    """Signed plane distance of one LiDAR point and its 1x18 Jacobian row.

    The residual is n . (p_world - anchor) with
    p_world = R (extrinsic * p_lidar) + t.  Under the right-perturbation
    convention the only nonzero Jacobian blocks are rotation and position.
    """
    p_imu = extrinsic.apply(np.asarray(point_lidar, dtype=float))
    rmat = nav.rotation.as_matrix()
    p_world = rmat @ p_imu + nav.position
    n = np.asarray(normal, dtype=float)
    z = float(n @ (p_world - np.asarray(anchor, dtype=float)))
    H = np.zeros(ERROR_DIM)
    H[POS] = n
    H[ROT] = -np.cross(rmat.T @ n, p_imu)
    return z, H


def residuals_batch(nav: NavState, extrinsic: Pose, points_lidar,
                    normals, anchors):
    """Vectorized residual_and_jacobian over M correspondences."""
    pts = np.asarray(points_lidar, dtype=float).reshape(-1, 3)
    nms = np.asarray(normals, dtype=float).reshape(-1, 3)
    anc = np.asarray(anchors, dtype=float).reshape(-1, 3)
    p_imu = pts @ extrinsic.rotation.as_matrix().T + extrinsic.translation
    rmat = nav.rotation.as_matrix()
    p_world = p_imu @ rmat.T + nav.position
    z = np.einsum("mi,mi->m", nms, p_world - anc)
    H = np.zeros((len(pts), ERROR_DIM))
    H[:, POS] = nms
    H[:, ROT] = -np.cross(nms @ rmat, p_imu)
    return z, H


@dataclass
class UpdateInfo:
    iterations: int = 0
    converged: bool = False
    rejected: bool = False
    skipped: bool = False
    num_rows: int = 0
    residual_rms: float = 0.0


def iekf_update(pred: FilterState, residual_provider, max_iters: int = 4,
                convergence_tol: float = 1e-3,
                cond_cap: float = 1e12) -> tuple[FilterState, UpdateInfo]:
    """Iterated MAP update of the predicted state.

    Args:
        pred: prediction (prior) state and covariance.
        residual_provider: callable nav -> (z (M,), H (M,18), var (M,))
            evaluated at each iterate; may re-associate internally.
        max_iters: iteration cap.
        convergence_tol: stop when the step norm falls below this.
        cond_cap: reject the update (return the prediction, flag raised)
            when the normal-equation matrix is worse-conditioned than this.

    Returns:
        (posterior FilterState, UpdateInfo)
    """
    info = UpdateInfo()
    prior_nav = pred.nav
    prior_info = np.linalg.inv(pred.cov)
    x = prior_nav
    H = var = None
    J = np.eye(ERROR_DIM)

    for it in range(max_iters):
        z, H, var = residual_provider(x)
        z = np.asarray(z, dtype=float).reshape(-1)
        H = np.asarray(H, dtype=float).reshape(-1, ERROR_DIM)
        var = np.asarray(var, dtype=float).reshape(-1)
        if len(z) == 0:
            info.skipped = True
            return pred, info
        info.num_rows = len(z)
        info.iterations = it + 1

        dx = box_minus(x, prior_nav)
        J = np.eye(ERROR_DIM)
        J[ROT, ROT] = so3_right_jacobian_inv(dx[ROT])
        Hw = H / var[:, None]
        JtPi = J.T @ prior_info
        A = JtPi @ J + H.T @ Hw
        b = JtPi @ dx + Hw.T @ z
        if np.linalg.cond(A) > cond_cap:
            info.rejected = True
            return pred, info
        delta = -np.linalg.solve(A, b)
        x = box_plus(x, delta)
        info.residual_rms = float(np.sqrt(np.mean(z * z)))
        if np.linalg.norm(delta) < convergence_tol:
            info.converged = True
            break

    # posterior covariance on the final linearization: P+ = (I - K H) P_lin
    # with P_lin the prior covariance pushed through the manifold Jacobian
    Jinv = np.linalg.inv(J)
    P_lin = Jinv @ pred.cov @ Jinv.T
    Hw = H / var[:, None]
    S = H.T @ Hw + np.linalg.inv(P_lin)
    K = np.linalg.solve(S, Hw.T)  # 18 x M gain, computed in the 18-dim form
    P_post = (np.eye(ERROR_DIM) - K @ H) @ P_lin
    P_post = 0.5 * (P_post + P_post.T)
    return FilterState(x, P_post), info
