"""Incremental per-voxel point distributions and surfel classification.

A voxel's point distribution is summarized by three accumulators — the
point count, the coordinate sum, and the upper triangle of the second
moment sum — which is enough to reconstruct the scatter matrix exactly
and lets two voxels merge by plain addition.  Eigen-analysis of the
scatter decides whether the distribution is planar enough to act as a
surfel, and a stability policy freezes ("fixes") a voxel once its
geometric normal agrees with the measured normals accumulated into it.
"""

from dataclasses import dataclass

import numpy as np

_TINY = 1e-12

# indices of the stored upper triangle: xx, xy, xz, yy, yz, zz
_TRI_R = (0, 0, 0, 1, 1, 2)
_TRI_C = (0, 1, 2, 1, 2, 2)

SCALE_SMALL = "small"
SCALE_LARGE = "large"


@dataclass(frozen=True)
class SurfelThresholds:
    """Acceptance thresholds for treating a distribution as a surfel."""

    planarity_min: float = 0.95
    eigen_ratio_min: float = 100.0
    min_points: int = 25


@dataclass(frozen=True)
class SurfelView:
    """A planar surface element: where it is and which way it faces."""

    mean: np.ndarray
    normal: np.ndarray
    planarity: float
    eigen_ratio: float
    scale: str = SCALE_SMALL


class VoxelStats:
    """Running distribution of the points accumulated into one voxel."""

    __slots__ = ("n", "point_sum", "moment_sum", "normal_sum", "fixed",
                 "fixed_surfel")

    def __init__(self):
        self.n = 0
        self.point_sum = np.zeros(3)
        self.moment_sum = np.zeros(6)
        self.normal_sum = np.zeros(3)
        self.fixed = False
        self.fixed_surfel: SurfelView | None = None

    def copy(self) -> "VoxelStats":
        out = VoxelStats()
        out.n = self.n
        out.point_sum = self.point_sum.copy()
        out.moment_sum = self.moment_sum.copy()
        out.normal_sum = self.normal_sum.copy()
        out.fixed = self.fixed
        out.fixed_surfel = self.fixed_surfel
        return out

    def accumulate(self, points, normals=None) -> "VoxelStats":
        """Fold a batch of points (and optionally their measured normals) in.

        Fixed voxels ignore further input by policy.  Incoming normals are
        sign-aligned to the running mean normal before summation so that
        flipped duplicates cannot cancel each other.
        """
        if self.fixed:
            return self
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return self
        self.n += len(pts)
        self.point_sum += pts.sum(axis=0)
        self.moment_sum += np.einsum("ni,nj->ij", pts, pts)[_TRI_R, _TRI_C]
        if normals is not None:
            nm = np.asarray(normals, dtype=float).reshape(-1, 3)
            keep = np.all(np.isfinite(nm), axis=1)
            nm = nm[keep]
            if len(nm):
                ref = self.normal_sum
                if np.linalg.norm(ref) <= _TINY:
                    ref = nm[0]
                signs = np.where(nm @ ref < 0.0, -1.0, 1.0)
                self.normal_sum += (signs[:, None] * nm).sum(axis=0)
        return self

    def mean(self) -> np.ndarray:
        return self.point_sum / self.n

    def scatter(self) -> np.ndarray:
        """Centered second-moment matrix reconstructed from the sums."""
        m = np.zeros((3, 3))
        m[_TRI_R, _TRI_C] = self.moment_sum
        m[_TRI_C, _TRI_R] = self.moment_sum
        return m - np.outer(self.point_sum, self.point_sum) / self.n

    def mean_normal(self) -> np.ndarray | None:
        nrm = np.linalg.norm(self.normal_sum)
        if nrm <= _TINY:
            return None
        return self.normal_sum / nrm

    def shape(self):
        """Eigen summary of the scatter: ascending eigenvalues, the plane
        normal candidate, and the planarity / aspect scores.

        Returns None when fewer than 3 points have been accumulated.
        """
        if self.n < 3:
            return None
        lams, vecs = np.linalg.eigh(self.scatter())
        lams = np.maximum(lams, 0.0)
        normal = vecs[:, 0]
        total = lams.sum()
        planarity = 2.0 * (lams[1] - lams[0]) / total if total > _TINY else 0.0
        if lams[0] < 1e-12 * max(total, _TINY):
            ratio = np.inf
        else:
            ratio = lams[1] / lams[0]
        return lams, normal, planarity, ratio

    def classify(self, thresholds: SurfelThresholds, scale: str = SCALE_SMALL):
        """Return a SurfelView when this distribution qualifies, else None.

        Fixed voxels answer from their cached view (re-checked against the
        thresholds), so classification cannot drift after fixing.
        """
        if self.fixed and self.fixed_surfel is not None:
            s = self.fixed_surfel
            if (s.planarity >= thresholds.planarity_min
                    and s.eigen_ratio >= thresholds.eigen_ratio_min
                    and self.n >= thresholds.min_points):
                return s
            return None
        if self.n < thresholds.min_points:
            return None
        sh = self.shape()
        if sh is None:
            return None
        _, normal, planarity, ratio = sh
        if planarity >= thresholds.planarity_min and ratio >= thresholds.eigen_ratio_min:
            aligned = self._aligned(normal)
            return SurfelView(self.mean(), aligned, planarity, ratio, scale)
        return None

    def _aligned(self, normal: np.ndarray) -> np.ndarray:
        """Sign the eigenvector consistently with the accumulated normals."""
        avg = self.mean_normal()
        if avg is not None:
            return -normal if float(normal @ avg) < 0.0 else normal.copy()
        # no measured normals: make the largest-magnitude component positive
        i = int(np.argmax(np.abs(normal)))
        return -normal if normal[i] < 0.0 else normal.copy()

    def try_fix(self, min_points: int, fix_angle_deg: float) -> "VoxelStats":
        """Freeze the voxel once its normal estimate has stabilized.

        From ``min_points`` on, the voxel fixes when the averaged measured
        normal agrees with the scatter eigenvector within ``fix_angle_deg``;
        the cached normal is then the normalized average of the two.  A
        voxel that reaches twice ``min_points`` without stabilizing is
        fixed unconditionally with the eigenvector alone.
        """
        if self.fixed or self.n < min_points:
            return self
        sh = self.shape()
        if sh is None:
            return self
        lams, e, planarity, ratio = sh
        e = self._aligned(e)
        avg = self.mean_normal()
        stabilized = False
        normal = e
        if avg is not None:
            angle = np.degrees(np.arccos(np.clip(abs(float(e @ avg)), 0.0, 1.0)))
            if angle < fix_angle_deg:
                stabilized = True
                combined = avg + e
                normal = combined / np.linalg.norm(combined)
        if stabilized or self.n >= 2 * min_points:
            self.fixed = True
            self.fixed_surfel = SurfelView(self.mean(), normal, planarity,
                                           ratio, SCALE_SMALL)
        return self


def merge(a: VoxelStats, b: VoxelStats) -> VoxelStats:
    """Sum two distributions; exact, as if all points had gone to one voxel."""
    out = VoxelStats()
    out.n = a.n + b.n
    out.point_sum = a.point_sum + b.point_sum
    out.moment_sum = a.moment_sum + b.moment_sum
    ref = a.normal_sum if np.linalg.norm(a.normal_sum) > _TINY else b.normal_sum
    flip = -1.0 if float(b.normal_sum @ ref) < 0.0 else 1.0
    out.normal_sum = a.normal_sum + flip * b.normal_sum
    return out
