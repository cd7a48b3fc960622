"""Structure table, range-image projection, and box-filter normals.

Two independent oracles drive this file: an exact least-squares plane
solve per window (for the equal-range identity) and np.nanmedian (for
the smoothing stage).
"""

import numpy as np
import pytest

from surfelio.errors import DegenerateScanError, ScanValidationError
from surfelio.ring_normals import (
    NormalImage,
    TableBuilder,
    build_structure_table,
    estimate_normals,
    flip_backfaced,
    median_smooth,
    project_scan,
    scan_normals,
)
from surfelio.scan import RingScan
from surfelio.simulator import LidarModel


def lidar_grid(rings=16, cols=240, fov=(-15.0, 15.0)):
    angles = np.deg2rad(np.linspace(fov[0], fov[1], rings))
    model = LidarModel(ring_count=rings, points_per_ring=cols,
                       vertical_angles=angles,
                       spin_rate=10.0, range_noise=0.0)
    return model.bearings()  # (R, C, 3) unit vectors


def grid_scan(bearings, ranges, keep=None):
    """RingScan with one point per kept grid cell at the given ranges."""
    R, C, _ = bearings.shape
    rr, cc = np.meshgrid(np.arange(R), np.arange(C), indexing="ij")
    mask = np.ones((R, C), dtype=bool) if keep is None else keep
    rr, cc = rr[mask], cc[mask]
    r = np.broadcast_to(ranges, (R, C))[mask]
    positions = bearings[rr, cc] * r[:, None]
    offsets = cc / (C * 10.0)
    return RingScan(positions, rr, offsets, 0.0, 0.1, R, C)


def exact_ls_normal(points):
    """Plane n.p = 1 fitted by unconstrained least squares; unit normal."""
    n, *_ = np.linalg.lstsq(np.asarray(points), np.ones(len(points)),
                            rcond=None)
    return n / np.linalg.norm(n)


def window_members(R, C, row, col, h):
    """Window cell indices with row clipping and azimuth wrap."""
    rows = range(max(0, row - h), min(R - 1, row + h) + 1)
    cols = [(col + dc) % C for dc in range(-h, h + 1)]
    return [(r, c) for r in rows for c in cols]


# ---------------------------------------------------------------------------
# table construction


def test_table_masks_and_support():
    bearings = lidar_grid(8, 60)
    scan = grid_scan(bearings, 5.0)
    table = build_structure_table([scan], window=3)
    assert table.observed.all()
    assert table.valid.all()
    # support = full window area, rows clipped at the top/bottom ring
    assert table.support_count[4, 10] == 9
    assert table.support_count[0, 10] == 6
    assert table.support_count[7, 0] == 6


def test_table_first_write_wins():
    bearings = lidar_grid(4, 16)
    builder = TableBuilder(window=3)
    builder.add_scan(grid_scan(bearings, 2.0))
    bearings_other = lidar_grid(4, 16, fov=(-10.0, 20.0))
    builder.add_scan(grid_scan(bearings_other, 2.0))
    table = builder.build()
    np.testing.assert_allclose(table.bearings, bearings, atol=1e-12)


def test_table_grid_mismatch_raises():
    builder = TableBuilder()
    builder.add_scan(grid_scan(lidar_grid(4, 16), 2.0))
    with pytest.raises(ScanValidationError):
        builder.add_scan(grid_scan(lidar_grid(8, 16), 2.0))


def test_table_rejects_even_window():
    with pytest.raises(ValueError):
        TableBuilder(window=4)


def test_table_rejects_zero_grid():
    empty = RingScan(np.empty((0, 3)), [], [], 0.0, 0.1, 0, 0)
    with pytest.raises(DegenerateScanError):
        TableBuilder().add_scan(empty)


# ---------------------------------------------------------------------------
# projection


def test_projection_keeps_nearest_on_collision():
    bearings = lidar_grid(4, 16)
    table = build_structure_table([grid_scan(bearings, 3.0)], window=3)
    # two points on the same cell (ring 1, col 5) at different ranges
    positions = np.vstack([bearings[1, 5] * 7.0, bearings[1, 5] * 4.0])
    scan = RingScan(positions, [1, 1], [0.0, 0.01], 0.0, 0.1, 4, 16)
    image = project_scan(scan, table)
    assert image.occupied[1, 5]
    assert image.inv_range[1, 5] == pytest.approx(1.0 / 4.0)
    assert image.source_index[1, 5] == 1
    assert image.occupied.sum() == 1


def test_projection_grid_mismatch_raises():
    table = build_structure_table([grid_scan(lidar_grid(4, 16), 3.0)])
    with pytest.raises(ScanValidationError):
        project_scan(grid_scan(lidar_grid(8, 16), 3.0), table)


def test_projection_empty_scan():
    table = build_structure_table([grid_scan(lidar_grid(4, 16), 3.0)])
    empty = RingScan(np.empty((0, 3)), [], [], 0.0, 0.1, 4, 16)
    image = project_scan(empty, table)
    assert not image.occupied.any()


# ---------------------------------------------------------------------------
# normal estimation


def test_equal_ranges_match_exact_least_squares(rng):
    """Uniform ranges: the box-filter solve equals a per-window LS fit."""
    bearings = lidar_grid(16, 240)
    table = build_structure_table([grid_scan(bearings, 1.0)], window=5)
    h = 2
    for r in (0.8, 3.0, 17.0):
        image = project_scan(grid_scan(bearings, r), table)
        est = flip_backfaced(estimate_normals(image, table), table)
        for _ in range(60):
            row = int(rng.integers(0, 16))
            col = int(rng.integers(0, 240))
            assert est.valid[row, col]
            members = window_members(16, 240, row, col, h)
            pts = np.array([bearings[m] * r for m in members])
            want = exact_ls_normal(pts)
            if np.dot(want, bearings[row, col]) > 0:
                want = -want
            angle = np.arccos(np.clip(np.dot(est.normals[row, col], want),
                                      -1.0, 1.0))
            assert angle < 1e-6


def test_plane_scan_recovers_plane_normal():
    """A wall seen through a fan of rays: every valid cell's normal is the
    wall normal, exactly, because occupied == observed for this table."""
    bearings = lidar_grid(16, 240)
    normal = np.array([1.0, 0.2, 0.05])
    normal /= np.linalg.norm(normal)
    d = 6.0
    dots = bearings @ normal
    keep = dots > 0.25  # rays that actually hit the wall at sane range
    ranges = np.where(keep, d / np.where(keep, dots, 1.0), 1.0)
    scan = grid_scan(bearings, ranges, keep=keep)
    table = build_structure_table([scan], window=5)
    image = project_scan(scan, table)
    est = flip_backfaced(estimate_normals(image, table, min_occupancy=1.0),
                         table)
    assert est.valid.sum() > 500
    errs = np.arccos(np.clip(np.abs(est.normals[est.valid] @ normal), -1, 1))
    assert np.max(errs) < 1e-6


def test_min_occupancy_gates_sparse_cells(rng):
    bearings = lidar_grid(16, 240)
    table = build_structure_table([grid_scan(bearings, 1.0)], window=5)
    keep = rng.random((16, 240)) < 0.5
    image = project_scan(grid_scan(bearings, 4.0, keep=keep), table)
    loose = estimate_normals(image, table, min_occupancy=0.2)
    strict = estimate_normals(image, table, min_occupancy=0.9)
    assert strict.valid.sum() < loose.valid.sum()
    assert not (strict.valid & ~image.occupied).any()


def test_flip_backfaced_orients_toward_sensor():
    bearings = lidar_grid(8, 60)
    table = build_structure_table([grid_scan(bearings, 2.0)], window=3)
    away = NormalImage(bearings.copy(), np.ones((8, 60), dtype=bool))
    flipped = flip_backfaced(away, table)
    dots = np.einsum("rci,rci->rc", flipped.normals, bearings)
    assert (dots <= 0.0).all()


# ---------------------------------------------------------------------------
# median smoothing


def nanmedian_oracle(normals: NormalImage, window: int) -> np.ndarray:
    """Reference smoothing: per-component nanmedian over the window, with
    row clipping and column wrap, renormalized; degenerate medians keep
    the input normal."""
    R, C, _ = normals.normals.shape
    h = window // 2
    out = np.full((R, C, 3), np.nan)
    for row in range(R):
        for col in range(C):
            if not normals.valid[row, col]:
                continue
            stack = np.array([normals.normals[m]
                              for m in window_members(R, C, row, col, h)])
            with np.errstate(all="ignore"):
                med = np.nanmedian(stack, axis=0)
            nrm = np.linalg.norm(med)
            out[row, col] = med / nrm if nrm > 1e-30 \
                else normals.normals[row, col]
    return out


def test_median_smooth_matches_nanmedian(rng):
    R, C = 10, 24
    vecs = rng.normal(0, 1, (R, C, 3))
    vecs /= np.linalg.norm(vecs, axis=-1, keepdims=True)
    valid = rng.random((R, C)) < 0.7
    vecs[~valid] = np.nan
    image = NormalImage(vecs, valid)
    smoothed = median_smooth(image, window=3)
    want = nanmedian_oracle(image, 3)
    np.testing.assert_allclose(smoothed.normals[valid], want[valid],
                               atol=1e-12)
    assert (smoothed.valid == valid).all()


def test_median_smooth_rejects_even_window():
    image = NormalImage(np.full((4, 4, 3), np.nan), np.zeros((4, 4), bool))
    with pytest.raises(ValueError):
        median_smooth(image, window=2)


# ---------------------------------------------------------------------------
# full per-scan pipeline


def test_scan_normals_end_to_end(corner_fixture):
    scans = corner_fixture.scans
    builder = TableBuilder(window=5)
    for scan in scans[:5]:
        builder.add_scan(scan)
    table = builder.build()
    scan = scans[6]
    point_normals, est, image = scan_normals(scan, table)
    assert point_normals.shape == (len(scan), 3)
    finite = np.isfinite(point_normals).all(axis=1)
    assert finite.sum() > 0.5 * len(scan)
    # every finite per-point normal is the normal of the cell it hit
    cols = np.mod(np.round(scan.azimuths / scan.h_res).astype(np.int64),
                  table.cols)
    cells_valid = est.valid[scan.rings, cols]
    assert (finite == cells_valid).all()
    np.testing.assert_allclose(point_normals[finite],
                               est.normals[scan.rings[finite], cols[finite]],
                               atol=0)
    # unit length wherever defined
    np.testing.assert_allclose(
        np.linalg.norm(point_normals[finite], axis=1), 1.0, atol=1e-9)
