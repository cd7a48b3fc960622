"""Per-point motion compensation of a scan.

Each point fired at a different instant while the sensor moved; deskewing
re-expresses every point in the LiDAR frame at scan end, using poses
interpolated from the IMU propagation buffer.  Points on a spinning
sensor share firing times per azimuth column, so the pose interpolation
is done once per distinct timestamp rather than once per point.
"""

import numpy as np

from .core import Pose
from .imu import PoseBuffer
from .scan import RingScan


def deskew(scan: RingScan, buffer: PoseBuffer, extrinsic: Pose, normals=None):
    """Transform scan points into the scan-end LiDAR frame.

    Args:
        scan: raw scan, points in the (moving) LiDAR frame at firing time.
        buffer: IMU poses covering the scan interval (body/IMU frame).
        extrinsic: LiDAR pose in the IMU frame.
        normals: optional (N, 3) per-point direction vectors expressed in
            the firing-time LiDAR frame; rotated (not translated) into the
            scan-end frame alongside the points.

    Returns:
        (points, normals, kept, dropped): deskewed (M, 3) points, rotated
        normals (or None when none were supplied), the (M,) indices of the
        surviving input points (original order), and the number of points
        dropped for falling outside the buffer's time span.
    """
    n = len(scan)
    if n == 0:
        empty_n = None if normals is None else np.empty((0, 3))
        return np.empty((0, 3)), empty_n, np.empty(0, dtype=np.int64), 0
    times = scan.scan_start + scan.time_offsets
    end_lidar = buffer.pose_at(scan.scan_end) * extrinsic
    end_inv = end_lidar.inverse()

    out = np.empty((n, 3))
    out_n = None if normals is None else np.empty((n, 3))
    keep = np.zeros(n, dtype=bool)
    uniq, inverse = np.unique(times, return_inverse=True)
    for ui, t in enumerate(uniq):
        sel = inverse == ui
        if not buffer.covers(t):
            continue
        rel = end_inv * (buffer.pose_at(t) * extrinsic)
        out[sel] = rel.apply(scan.positions[sel])
        if out_n is not None:
            out_n[sel] = normals[sel] @ rel.rotation.as_matrix().T
        keep[sel] = True
    kept = np.flatnonzero(keep)
    out_n = None if out_n is None else out_n[kept]
    return out[kept], out_n, kept, int(n - len(kept))
