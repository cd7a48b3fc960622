"""Stage timing for the range-image normal pipeline.

Times the three stages separately (projection, box-filtering, smoothing)
plus the end-to-end total, averaged over the supplied scans, and can time
the brute-force kNN-PCA oracle on the same data for comparison.
"""

import time

import numpy as np

from .pca_normals import knn_pca_normals
from .ring_normals import (build_structure_table, estimate_normals,
                           flip_backfaced, median_smooth, project_scan)
from .scan import RingScan

STAGES = ("projection", "box-filtering", "smoothing")


def velodyne32_scan(seed: int = 7, range_noise: float = 0.01) -> RingScan:
    """A dense 32-ring x 1800-column scan (57,600 points) inside a box."""
    from .simulator import LidarModel, box_interior, simulate_lidar
    from .core import Pose
    model = LidarModel(ring_count=32, points_per_ring=1800,
                       vertical_angles=np.deg2rad(np.linspace(-30.0, 10.0, 32)),
                       spin_rate=10.0, range_noise=range_noise, max_range=60.0)
    scene = box_interior((-10.0, -4.0, -2.0), (10.0, 4.0, 2.5))
    rng = np.random.default_rng(seed)
    scan, _, _ = simulate_lidar(scene, lambda t: Pose.identity(), model,
                                scan_start=0.0, rng=rng)
    if len(scan) != 32 * 1800:
        raise AssertionError(f"expected a full scan, got {len(scan)} points")
    return scan


def time_stages(scans, window: int = 5, min_occupancy: float = 0.6,
                cond_cap: float = 1e6, table=None) -> dict:
    """Mean per-scan wall time (ms) of each pipeline stage.

    The structure table is built once up front (from all scans unless one
    is passed in) and not counted, matching how the odometry loop amortizes
    it over a whole run.
    """
    scans = list(scans)
    if not scans:
        raise ValueError("no scans to benchmark")
    if table is None:
        table = build_structure_table(scans, window=window, cond_cap=cond_cap)
    acc = {name: 0.0 for name in STAGES}
    acc["total"] = 0.0
    for scan in scans:
        t0 = time.perf_counter()
        image = project_scan(scan, table)
        t1 = time.perf_counter()
        est = estimate_normals(image, table, min_occupancy=min_occupancy)
        est = flip_backfaced(est, table)
        t2 = time.perf_counter()
        median_smooth(est, window=3)
        t3 = time.perf_counter()
        acc["projection"] += t1 - t0
        acc["box-filtering"] += t2 - t1
        acc["smoothing"] += t3 - t2
        acc["total"] += t3 - t0
    n = len(scans)
    return {name: 1e3 * v / n for name, v in acc.items()} | {"scans": n}


def time_oracle(scans, k: int = 25) -> float:
    """Mean per-scan wall time (ms) of the kNN-PCA baseline."""
    scans = list(scans)
    if not scans:
        raise ValueError("no scans to benchmark")
    total = 0.0
    for scan in scans:
        t0 = time.perf_counter()
        knn_pca_normals(scan.positions, k=k)
        total += time.perf_counter() - t0
    return 1e3 * total / len(scans)


def format_table(results: dict) -> str:
    lines = [f"stage          mean ms/scan   ({results['scans']} scans)",
             "-" * 40]
    for name in (*STAGES, "total"):
        lines.append(f"{name:<14} {results[name]:>10.3f}")
    if "oracle" in results:
        lines.append(f"{'knn-pca oracle':<14} {results['oracle']:>10.3f}")
        lines.append(f"{'speedup':<14} {results['oracle'] / results['total']:>10.2f}x")
    return "\n".join(lines)
