"""Reference normal estimation by neighborhood eigen-analysis.

This is the slow, exact baseline the fast ring estimator is checked and
benchmarked against: for each point, find its k nearest neighbors in 3-D
and take the smallest-eigenvalue eigenvector of the neighborhood scatter
matrix.  Plane fitting for small point sets lives here too, since it is
the same eigen problem.
"""

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateScanError


def knn_pca_normals(points, k: int = 25, workers: int = 1) -> np.ndarray:
    """Per-point normals from k-nearest-neighbor covariance eigenvectors.

    Normals are flipped to face the origin (sensor), matching the ring
    estimator's orientation convention.

    Args:
        points: (N, 3) array in the sensor frame.
        k: neighborhood size, including the point itself.
        workers: thread count for the tree query; keep 1 for benchmarking
            against single-stream implementations.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegenerateScanError("need at least 3 points for PCA normals")
    k = min(k, len(pts))
    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k, workers=workers)
    if k == 1:
        idx = idx[:, None]
    nb = pts[idx]
    centered = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    toward = np.einsum("ni,ni->n", normals, pts) > 0.0
    normals[toward] = -normals[toward]
    return normals


def fit_plane(points):
    """Exact least-squares plane through a point set.

    Returns:
        (normal, centroid): unit normal (arbitrary sign) and the mean point.

    Raises:
        DegenerateScanError: fewer than 3 points.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise DegenerateScanError("need at least 3 points to fit a plane")
    centroid = pts.mean(axis=0)
    d = pts - centroid
    cov = d.T @ d
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, 0], centroid


def angles_between(a, b) -> np.ndarray:
    """Sign-insensitive angles (radians) between paired unit vectors."""
    dots = np.abs(np.einsum("ni,ni->n", np.atleast_2d(a), np.atleast_2d(b)))
    return np.arccos(np.clip(dots, 0.0, 1.0))
