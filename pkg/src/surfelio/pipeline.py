"""Scan-by-scan odometry: normals, downsample, predict, deskew, update, map.

One :class:`OdometryPipeline` owns the whole per-sensor state: the range-
image structure table (accumulated over the first scans, then frozen),
the IMU buffer, the filter state, the incremental map, and the estimated
trajectory.  ``add_imu`` and ``process_scan`` are the only inputs; each
processed scan yields a pose and a diagnostics record.

Per-scan order of operations: range-image normals -> per-voxel downsample
(at most one point per voxel, valid normal required) -> IMU propagation to
scan end -> motion compensation -> map association at the predicted pose ->
iterated filter update -> insert the scan into the map at the posterior
pose.  The first scan bootstraps the map without an update, after gravity
and gyro bias are initialized from the standstill prefix of the IMU stream.
"""

import time
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .association import associate_scan
from .config import RunConfig
from .core import ERROR_DIM, ImuSample, NavState, Pose, Rotation
from .deskew import deskew
from .errors import PropagationError
from .filter import UpdateInfo, iekf_update, residuals_batch
from .formats import Trajectory
from .imu import FilterState, imu_propagate, initialize_gravity
from .ring_normals import TableBuilder, scan_normals
from .scan import RingScan
from .voxel_map import MapIndex, voxel_keys

_INIT_VARIANCES = (1e-4, 1e-6, 1e-4, 1e-6, 1e-4, 1e-4)  # rot p v bg ba g


@dataclass
class ScanResult:
    timestamp: float   # scan end, seconds
    pose: Pose         # body (IMU) pose in the world frame at scan end
    diagnostics: dict


class OdometryPipeline:
    def __init__(self, config: RunConfig | None = None):
        cfg = config if config is not None else RunConfig.default()
        self.config = cfg
        self._extrinsic = cfg.extrinsic()
        self._assoc_cfg = cfg.assoc_config()
        self._imu_noise = cfg.imu_noise()
        self._imu: list[ImuSample] = []
        self._imu_times: list[float] = []
        self._builder = TableBuilder(window=cfg.normal_window,
                                     cond_cap=cfg.condition_cap)
        self._table = None
        self._table_scans = 0
        self.map = MapIndex(cfg.voxel_size,
                            retained_per_voxel=cfg.retained_per_voxel,
                            thresholds=cfg.surfel_thresholds(),
                            fix_angle_deg=cfg.surfel_fix_angle_deg)
        self.state: FilterState | None = None
        self.state_time: float | None = None
        self.trajectory = Trajectory()
        self.scan_count = 0

    @property
    def table_frozen(self) -> bool:
        return self._table_scans >= self.config.table_scans

    def add_imu(self, samples) -> int:
        """Buffer IMU samples; drops any not newer than the buffered tail."""
        if isinstance(samples, ImuSample):
            samples = [samples]
        added = 0
        for s in samples:
            if self._imu_times and s.timestamp <= self._imu_times[-1]:
                continue
            self._imu.append(s)
            self._imu_times.append(s.timestamp)
            added += 1
        return added

    def _imu_slice(self, t0: float, t1: float) -> list[ImuSample]:
        lo = bisect_left(self._imu_times, t0)
        if lo > 0:
            lo -= 1  # one sample of lead-in for interpolation at t0
        hi = bisect_right(self._imu_times, t1)
        if hi < len(self._imu_times):
            hi += 1
        return self._imu[lo:hi]

    def _initialize(self, scan: RingScan) -> None:
        cfg = self.config
        head = self._imu[:bisect_right(self._imu_times, scan.scan_start)]
        gravity, gyro_bias = initialize_gravity(
            head, window=cfg.init_window,
            gravity_magnitude=cfg.gravity_magnitude)
        nav = NavState(rotation=Rotation.identity(),
                       position=np.zeros(3), velocity=np.zeros(3),
                       gyro_bias=gyro_bias, accel_bias=np.zeros(3),
                       gravity=gravity)
        cov = np.zeros((ERROR_DIM, ERROR_DIM))
        for b, v in enumerate(_INIT_VARIANCES):
            cov[3 * b:3 * b + 3, 3 * b:3 * b + 3] = v * np.eye(3)
        self.state = FilterState(nav=nav, cov=cov)
        self.state_time = scan.scan_start

    def _scan_normals(self, scan: RingScan):
        cfg = self.config
        if not self.table_frozen:
            self._builder.add_scan(scan)
            self._table_scans += 1
            self._table = self._builder.build()
        return scan_normals(scan, self._table,
                            min_occupancy=cfg.min_occupancy)

    def _downsample(self, scan: RingScan, point_normals: np.ndarray):
        """At most one valid-normal point per downsample voxel (nearest center)."""
        valid = np.flatnonzero(np.all(np.isfinite(point_normals), axis=1))
        if len(valid) == 0:
            return valid
        size = self.config.downsample_size
        pts = scan.positions[valid]
        keys = voxel_keys(pts, size)
        centers = (keys + 0.5) * size
        d2 = np.sum((pts - centers) ** 2, axis=1)
        order = np.lexsort((d2, keys[:, 2], keys[:, 1], keys[:, 0]))
        k_sorted = keys[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = np.any(k_sorted[1:] != k_sorted[:-1], axis=1)
        return valid[np.sort(order[first])]

    def process_scan(self, scan: RingScan) -> ScanResult:
        cfg = self.config
        warnings: list[str] = []
        timings: dict[str, float] = {}
        t_total = time.perf_counter()

        def clock(name, since):
            timings[name] = (time.perf_counter() - since) * 1e3
            return time.perf_counter()

        if self.state_time is not None and scan.scan_end <= self.state_time:
            raise PropagationError(
                f"scan ending at {scan.scan_end:.4f} precedes the filter "
                f"time {self.state_time:.4f}")
        if self.state is None:
            self._initialize(scan)

        mark = time.perf_counter()
        point_normals, _, _ = self._scan_normals(scan)
        mark = clock("normals", mark)

        sel = self._downsample(scan, point_normals)
        sub = RingScan(positions=scan.positions[sel], rings=scan.rings[sel],
                       time_offsets=scan.time_offsets[sel],
                       scan_start=scan.scan_start, scan_end=scan.scan_end,
                       ring_count=scan.ring_count,
                       points_per_ring=scan.points_per_ring)
        sub_normals = point_normals[sel]
        mark = clock("downsample", mark)

        t0, t1 = self.state_time, scan.scan_end
        pred, buffer = imu_propagate(self.state, self._imu_slice(t0, t1),
                                     self._imu_noise, t0, t1,
                                     max_gap=cfg.imu_gap_limit)
        mark = clock("propagate", mark)

        pts_end, nrm_end, _, dropped = deskew(sub, buffer, self._extrinsic,
                                              normals=sub_normals)
        if dropped:
            warnings.append(f"{dropped} points outside the pose buffer")
        mark = clock("deskew", mark)

        bootstrap = self.map.retained_count == 0
        hist = {}
        n_corr = 0
        if bootstrap:
            post, info = pred, UpdateInfo(skipped=True)
            status = "bootstrap"
            mark = clock("associate", mark)
            mark = clock("update", mark)
        else:
            post, info, hist, n_corr, mark = self._update(
                pred, pts_end, nrm_end, warnings, mark, clock)
            if info.rejected:
                status = "rejected"
            elif info.skipped:
                status = "skipped"
            else:
                status = "updated"

        if not cfg.update_gravity:
            post = FilterState(nav=replace(post.nav, gravity=pred.nav.gravity),
                               cov=post.cov)
        g_norm = float(np.linalg.norm(post.nav.gravity))
        if abs(g_norm - cfg.gravity_magnitude) > cfg.gravity_norm_tolerance:
            warnings.append(f"gravity norm drifted to {g_norm:.3f}")

        lidar_pose = post.nav.pose() * self._extrinsic
        self.map.insert_scan(lidar_pose.apply(pts_end),
                             nrm_end @ lidar_pose.rotation.as_matrix().T)
        clock("insert", mark)

        self.state = post
        self.state_time = scan.scan_end
        self.trajectory.append(scan.scan_end, post.nav.pose())
        self.scan_count += 1
        timings["total"] = (time.perf_counter() - t_total) * 1e3

        diagnostics = {
            "scan": self.scan_count - 1,
            "timestamp": scan.scan_end,
            "status": status,
            "points": len(scan),
            "downsampled": len(sub),
            "correspondences": n_corr,
            "histogram": hist,
            "iterations": info.iterations,
            "converged": info.converged,
            "residual_rms": info.residual_rms,
            "map_voxels": len(self.map),
            "map_points": self.map.retained_count,
            "table_frozen": self.table_frozen,
            "gravity_norm": g_norm,
            "timing_ms": {k: round(v, 3) for k, v in timings.items()},
            "warnings": warnings,
        }
        return ScanResult(timestamp=scan.scan_end, pose=post.nav.pose(),
                          diagnostics=diagnostics)

    def _update(self, pred: FilterState, pts_end, nrm_end, warnings,
                mark, clock):
        """Associate against the map and run the iterated update."""
        cfg = self.config
        state_box = {"hist": {}, "count": 0}

        def associate_at(nav: NavState):
            lidar_pose = nav.pose() * self._extrinsic
            pts_w = lidar_pose.apply(pts_end)
            nrm_w = nrm_end @ lidar_pose.rotation.as_matrix().T
            matches, hist = associate_scan(self.map, pts_w, nrm_w,
                                           lidar_pose.translation,
                                           self._assoc_cfg)
            idx = [i for i, m in enumerate(matches) if m is not None]
            state_box["hist"] = hist
            state_box["count"] = len(idx)
            if not idx:
                return (np.empty((0, 3)),) * 3 + (np.empty(0),)
            normals = np.stack([matches[i].normal for i in idx])
            anchors = np.stack([matches[i].anchor for i in idx])
            var = np.array([matches[i].noise for i in idx])
            return pts_end[idx], normals, anchors, var

        if cfg.reassociate_each_iteration:
            def provider(nav):
                pts, normals, anchors, var = associate_at(nav)
                if len(pts) < cfg.min_correspondences:
                    return np.empty(0), np.empty((0, ERROR_DIM)), np.empty(0)
                z, H = residuals_batch(nav, self._extrinsic, pts, normals,
                                       anchors)
                return z, H, var
            mark = clock("associate", mark)
        else:
            pts, normals, anchors, var = associate_at(pred.nav)
            mark = clock("associate", mark)
            if len(pts) < cfg.min_correspondences:
                warnings.append(
                    f"only {len(pts)} correspondences (need "
                    f"{cfg.min_correspondences}); update skipped")
                mark = clock("update", mark)
                return pred, UpdateInfo(skipped=True), state_box["hist"], \
                    state_box["count"], mark

            def provider(nav):
                z, H = residuals_batch(nav, self._extrinsic, pts, normals,
                                       anchors)
                return z, H, var

        post, info = iekf_update(pred, provider,
                                 max_iters=cfg.max_iterations,
                                 convergence_tol=cfg.convergence_tol)
        if info.rejected:
            warnings.append("update rejected: normal equations ill-conditioned")
        if info.skipped and not warnings:
            warnings.append("update skipped: no usable correspondences")
        mark = clock("update", mark)
        return post, info, state_box["hist"], state_box["count"], mark
