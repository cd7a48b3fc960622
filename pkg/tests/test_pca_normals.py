"""The kNN-PCA reference normal estimator used as an oracle elsewhere."""

import numpy as np

from surfelio.pca_normals import angles_between, fit_plane, knn_pca_normals


def test_fit_plane_exact():
    rng = np.random.default_rng(3)
    normal = np.array([0.2, -0.5, 0.84])
    normal /= np.linalg.norm(normal)
    u = np.cross(normal, [1.0, 0.0, 0.0])
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    coords = rng.uniform(-1, 1, (50, 2))
    pts = 2.5 * normal + coords[:, :1] * u + coords[:, 1:] * v
    n, centroid = fit_plane(pts)
    assert abs(abs(np.dot(n, normal)) - 1.0) < 1e-10
    np.testing.assert_allclose(centroid, pts.mean(axis=0), atol=1e-12)


def test_knn_pca_on_two_perpendicular_walls():
    rng = np.random.default_rng(4)
    wall_x = np.column_stack([np.zeros(300),
                              rng.uniform(0, 4, 300),
                              rng.uniform(0, 2, 300)])
    wall_y = np.column_stack([rng.uniform(0.2, 4, 300),
                              np.zeros(300),
                              rng.uniform(0, 2, 300)])
    pts = np.vstack([wall_x, wall_y])
    normals = knn_pca_normals(pts, k=12)
    # interior points (away from the seam) must recover their wall normal
    interior_x = wall_x[:, 1] > 1.0
    nx = normals[:300][interior_x]
    assert np.median(np.abs(nx[:, 0])) > 0.999
    interior_y = wall_y[:, 0] > 1.2
    ny = normals[300:][interior_y]
    assert np.median(np.abs(ny[:, 1])) > 0.999


def test_angles_between_known_pairs():
    a = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    b = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
    angles = angles_between(a, b)
    np.testing.assert_allclose(angles, [0.0, np.pi / 2, 0.0], atol=1e-12)


def test_angles_between_is_sign_insensitive():
    rng = np.random.default_rng(5)
    a = rng.normal(0, 1, (40, 3))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    np.testing.assert_allclose(angles_between(a, -a), 0.0, atol=1e-7)
