"""Deterministic scene, spinning-LiDAR, and IMU generator.

Scenes are finite sets of rectangular planar patches (boxes decompose
into six of them).  The LiDAR model fires one azimuth column at a time
while the sensor moves along an analytic trajectory, so every point gets
a consistent firing time, ground-truth patch normal, and patch id.  The
IMU synthesizer differentiates the same trajectory analytically, which
makes the two sensor streams exactly consistent with each other.

All randomness flows through one numpy Generator per call, in a fixed
order, so a fixture regenerated with the same seed is bit-identical.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import ImuSample, Pose, Rotation
from .imu import ImuNoise
from .scan import RingScan

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Patch:
    """Rectangular planar patch: center, unit normal, in-plane axes, half sizes."""

    center: np.ndarray
    normal: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_u: float
    half_v: float

    def __post_init__(self):
        for name in ("center", "normal", "axis_u", "axis_v"):
            object.__setattr__(self, name,
                               np.asarray(getattr(self, name), dtype=float).reshape(3))


def make_patch(center, normal, half_u, half_v, up_hint=(0.0, 0.0, 1.0)) -> Patch:
    """Build a patch from center + normal, deriving orthonormal in-plane axes."""
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    hint = np.asarray(up_hint, dtype=float)
    if abs(float(n @ hint)) > 0.99:
        hint = np.array([1.0, 0.0, 0.0])
    u = np.cross(hint, n)
    u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return Patch(np.asarray(center, dtype=float), n, u, v, float(half_u), float(half_v))


def box_interior(min_corner, max_corner) -> list[Patch]:
    """Six patches forming the inside of an axis-aligned box (normals inward)."""
    lo = np.asarray(min_corner, dtype=float)
    hi = np.asarray(max_corner, dtype=float)
    c = 0.5 * (lo + hi)
    h = 0.5 * (hi - lo)
    patches = []
    for axis in range(3):
        for sign, coord in ((1.0, hi[axis]), (-1.0, lo[axis])):
            center = c.copy()
            center[axis] = coord
            normal = np.zeros(3)
            normal[axis] = -sign  # inward
            patch = make_patch(center, normal, 1.0, 1.0,
                               up_hint=(0, 0, 1) if axis != 2 else (1, 0, 0))
            # half sizes measured along the axes make_patch actually derived
            patches.append(replace(patch,
                                   half_u=float(np.abs(patch.axis_u) @ h),
                                   half_v=float(np.abs(patch.axis_v) @ h)))
    return patches


@dataclass(frozen=True)
class LidarModel:
    """Spinning-LiDAR geometry and noise."""

    ring_count: int
    points_per_ring: int
    vertical_angles: np.ndarray  # radians, strictly increasing, one per ring
    spin_rate: float             # revolutions per second
    range_noise: float = 0.0     # sigma, meters
    max_range: float = 100.0
    min_range: float = 0.1

    def __post_init__(self):
        va = np.asarray(self.vertical_angles, dtype=float).reshape(-1)
        if len(va) != self.ring_count:
            raise ValueError("vertical_angles length must equal ring_count")
        if np.any(np.diff(va) <= 0.0):
            raise ValueError("vertical_angles must strictly increase")
        if self.points_per_ring < 8:
            raise ValueError("need at least 8 points per ring")
        object.__setattr__(self, "vertical_angles", va)

    def bearings(self) -> np.ndarray:
        """Unit ray directions on the (ring, column) grid, sensor frame."""
        az = np.arange(self.points_per_ring) * (_TWO_PI / self.points_per_ring)
        el = self.vertical_angles
        ce, se = np.cos(el)[:, None], np.sin(el)[:, None]
        ca, sa = np.cos(az)[None, :], np.sin(az)[None, :]
        return np.stack([ce * ca, ce * sa,
                         np.broadcast_to(se, (self.ring_count, self.points_per_ring))],
                        axis=-1)


# ---------------------------------------------------------------------------
# analytic trajectories


class _Piece:
    duration: float

    def pose(self, t: float) -> Pose:
        raise NotImplementedError

    def velocity(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def acceleration(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def angular_velocity_body(self, t: float) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class StaticPiece(_Piece):
    duration: float

    def pose(self, t):
        return Pose.identity()

    def velocity(self, t):
        return np.zeros(3)

    def acceleration(self, t):
        return np.zeros(3)

    def angular_velocity_body(self, t):
        return np.zeros(3)


@dataclass(frozen=True)
class ConstantVelocityPiece(_Piece):
    """Screw motion: constant world linear velocity, constant body rate."""

    duration: float
    linear_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "linear_velocity",
                           np.asarray(self.linear_velocity, dtype=float).reshape(3))
        object.__setattr__(self, "angular_velocity",
                           np.asarray(self.angular_velocity, dtype=float).reshape(3))

    def pose(self, t):
        return Pose(Rotation.exp(self.angular_velocity * t),
                    self.linear_velocity * t)

    def velocity(self, t):
        return self.linear_velocity.copy()

    def acceleration(self, t):
        return np.zeros(3)

    def angular_velocity_body(self, t):
        return self.angular_velocity.copy()


@dataclass(frozen=True)
class SinusoidPiece(_Piece):
    """Smooth oscillation: raised-cosine translation plus attitude waves.

    Each axis i travels from 0 to amplitude[i] and back with period[i];
    velocity is zero at the piece start, so it splices cleanly after a
    static piece.  Attitude oscillates about the piece-entry orientation as
    yaw/pitch/roll waves angle = amplitude * sin(2 pi t / period), composed
    Rz(yaw) * Ry(pitch) * Rx(roll); body rates use the exact Euler-rate
    kinematics so the IMU stream integrates back to the poses.
    """

    duration: float
    amplitudes: np.ndarray = field(default_factory=lambda: np.zeros(3))
    periods: np.ndarray = field(default_factory=lambda: np.ones(3))
    yaw_amplitude: float = 0.0
    yaw_period: float = 1.0
    pitch_amplitude: float = 0.0
    pitch_period: float = 1.0
    roll_amplitude: float = 0.0
    roll_period: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "amplitudes",
                           np.asarray(self.amplitudes, dtype=float).reshape(3))
        object.__setattr__(self, "periods",
                           np.asarray(self.periods, dtype=float).reshape(3))
        if np.any(self.periods <= 0.0):
            raise ValueError("sinusoid periods must be positive")
        for period in (self.yaw_period, self.pitch_period, self.roll_period):
            if period <= 0.0:
                raise ValueError("sinusoid periods must be positive")

    def _w(self):
        return _TWO_PI / self.periods

    def _angles(self, t):
        """(yaw, pitch, roll) and their time derivatives at t."""
        out = []
        for amp, period in ((self.yaw_amplitude, self.yaw_period),
                            (self.pitch_amplitude, self.pitch_period),
                            (self.roll_amplitude, self.roll_period)):
            w = _TWO_PI / period
            out.append((amp * math.sin(w * t), amp * w * math.cos(w * t)))
        return out

    def pose(self, t):
        w = self._w()
        p = 0.5 * self.amplitudes * (1.0 - np.cos(w * t))
        (yaw, _), (pitch, _), (roll, _) = self._angles(t)
        rot = Rotation.exp((0.0, 0.0, yaw)) \
            * Rotation.exp((0.0, pitch, 0.0)) \
            * Rotation.exp((roll, 0.0, 0.0))
        return Pose(rot, p)

    def velocity(self, t):
        w = self._w()
        return 0.5 * self.amplitudes * w * np.sin(w * t)

    def acceleration(self, t):
        w = self._w()
        return 0.5 * self.amplitudes * w * w * np.cos(w * t)

    def angular_velocity_body(self, t):
        (_, yaw_rate), (pitch, pitch_rate), (roll, roll_rate) = self._angles(t)
        sin_r, cos_r = math.sin(roll), math.cos(roll)
        sin_p, cos_p = math.sin(pitch), math.cos(pitch)
        return np.array([
            roll_rate - yaw_rate * sin_p,
            pitch_rate * cos_r + yaw_rate * cos_p * sin_r,
            yaw_rate * cos_p * cos_r - pitch_rate * sin_r,
        ])


class Trajectory:
    """Piecewise analytic body trajectory starting from a given pose."""

    def __init__(self, pieces: list[_Piece], start_pose: Pose | None = None):
        if not pieces:
            raise ValueError("trajectory needs at least one piece")
        self.pieces = list(pieces)
        self._entries = []
        entry = start_pose if start_pose is not None else Pose.identity()
        t0 = 0.0
        for piece in self.pieces:
            self._entries.append((t0, entry))
            t0 += piece.duration
            entry = entry * piece.pose(piece.duration)
        self.duration = t0
        self._end_pose = entry

    def _locate(self, t: float):
        if t < 0.0:
            t = 0.0
        for i in range(len(self.pieces) - 1, -1, -1):
            t0, entry = self._entries[i]
            if t >= t0:
                return self.pieces[i], entry, min(t - t0, self.pieces[i].duration)
        return self.pieces[0], self._entries[0][1], 0.0

    def pose(self, t: float) -> Pose:
        piece, entry, tau = self._locate(t)
        return entry * piece.pose(tau)

    def velocity(self, t: float) -> np.ndarray:
        piece, entry, tau = self._locate(t)
        return entry.rotation.apply(piece.velocity(tau))

    def acceleration(self, t: float) -> np.ndarray:
        piece, entry, tau = self._locate(t)
        return entry.rotation.apply(piece.acceleration(tau))

    def angular_velocity_body(self, t: float) -> np.ndarray:
        piece, entry, tau = self._locate(t)
        return piece.angular_velocity_body(tau)


# ---------------------------------------------------------------------------
# sensors


def simulate_lidar(scene: list[Patch], pose_fn, model: LidarModel,
                   scan_start: float, rng: np.random.Generator):
    """Cast one full revolution of rays from a moving sensor.

    Args:
        scene: list of patches.
        pose_fn: t -> Pose of the LiDAR in the world frame.
        model: sensor geometry and noise.
        scan_start: firing time of column 0.
        rng: noise source (consumed only for hits, in scan order).

    Returns:
        (scan, gt_normals, gt_patch): the RingScan, per-point ground-truth
        patch normals (N, 3) expressed in the sensor frame at each point's
        firing time (matching the frame of the scan positions), and
        per-point patch indices (N,).
    """
    R, C = model.ring_count, model.points_per_ring
    bearings = model.bearings()
    col_dt = 1.0 / (C * model.spin_rate)
    col_times = scan_start + np.arange(C) * col_dt
    scan_end = scan_start + 1.0 / model.spin_rate

    rmats = np.empty((C, 3, 3))
    origins = np.empty((C, 3))
    for c, t in enumerate(col_times):
        pose = pose_fn(t)
        rmats[c] = pose.rotation.as_matrix()
        origins[c] = pose.translation
    dirs = np.einsum("cij,rcj->rci", rmats, bearings)

    best_t = np.full((R, C), np.inf)
    best_patch = np.full((R, C), -1, dtype=np.int64)
    for pi, patch in enumerate(scene):
        denom = dirs @ patch.normal
        offs = patch.center[None, :] - origins  # (C, 3)
        num = offs @ patch.normal               # (C,)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_hit = num[None, :] / denom
            hit_pt = origins[None, :, :] + t_hit[..., None] * dirs
        local = hit_pt - patch.center
        in_u = np.abs(local @ patch.axis_u) <= patch.half_u + 1e-12
        in_v = np.abs(local @ patch.axis_v) <= patch.half_v + 1e-12
        ok = (np.abs(denom) > 1e-12) & (t_hit > model.min_range) \
            & (t_hit <= model.max_range) & in_u & in_v & (t_hit < best_t)
        best_t[ok] = t_hit[ok]
        best_patch[ok] = pi

    hit = best_patch >= 0
    rr, cc = np.nonzero(hit)
    # fire order: column-major (all rings of column 0, then column 1, ...)
    order = np.lexsort((rr, cc))
    rr, cc = rr[order], cc[order]
    ranges = best_t[rr, cc]
    if model.range_noise > 0.0:
        ranges = ranges + rng.normal(0.0, model.range_noise, size=len(ranges))
        ranges = np.maximum(ranges, model.min_range * 0.5)
    positions = bearings[rr, cc] * ranges[:, None]
    scan = RingScan(
        positions=positions,
        rings=rr,
        time_offsets=col_times[cc] - scan_start,
        scan_start=scan_start,
        scan_end=scan_end,
        ring_count=R,
        points_per_ring=C,
    )
    patch_ids = best_patch[rr, cc]
    if len(patch_ids):
        world_normals = np.stack([scene[i].normal for i in patch_ids])
        # world -> sensor frame of the firing column: n_s = R_c^T n_w
        gt_normals = np.einsum("kji,kj->ki", rmats[cc], world_normals)
    else:
        gt_normals = np.empty((0, 3))
    return scan, gt_normals, patch_ids


def simulate_imu(traj: Trajectory, t0: float, t1: float, rate: float,
                 noise: ImuNoise, gyro_bias, accel_bias, gravity,
                 rng: np.random.Generator) -> list[ImuSample]:
    """Sample ideal IMU measurements from the trajectory, then corrupt them.

    The accelerometer reads specific force: R^T (a_world - g) + bias + noise.
    Discrete noise sigmas follow from the continuous densities at the given
    rate (sigma_d = density * sqrt(rate)).
    """
    if rate < 50.0:
        raise ValueError("IMU rate below 50 Hz is not supported")
    gyro_bias = np.asarray(gyro_bias, dtype=float).reshape(3)
    accel_bias = np.asarray(accel_bias, dtype=float).reshape(3)
    gravity = np.asarray(gravity, dtype=float).reshape(3)
    n = int(np.floor((t1 - t0) * rate)) + 1
    times = t0 + np.arange(n) / rate
    sg = noise.gyro_noise * np.sqrt(rate)
    sa = noise.accel_noise * np.sqrt(rate)
    wn = rng.normal(0.0, 1.0, size=(n, 3)) * sg if sg > 0 else np.zeros((n, 3))
    an = rng.normal(0.0, 1.0, size=(n, 3)) * sa if sa > 0 else np.zeros((n, 3))
    samples = []
    for i, t in enumerate(times):
        pose = traj.pose(t)
        w = traj.angular_velocity_body(t) + gyro_bias + wn[i]
        f = pose.rotation.as_matrix().T @ (traj.acceleration(t) - gravity) \
            + accel_bias + an[i]
        samples.append(ImuSample(float(t), w, f))
    return samples


# ---------------------------------------------------------------------------
# named fixtures


@dataclass(frozen=True)
class FixtureSpec:
    name: str
    scene: list[Patch]
    trajectory: Trajectory
    model: LidarModel
    duration: float
    first_scan_time: float
    imu_rate: float
    seed: int
    gyro_bias: tuple = (0.002, -0.001, 0.0015)
    accel_bias: tuple = (0.02, -0.03, 0.01)
    gravity: tuple = (0.0, 0.0, -9.81)
    imu_noise: ImuNoise = field(default_factory=ImuNoise)


@dataclass
class FixtureData:
    spec: FixtureSpec
    scans: list[RingScan]
    gt_normals: list[np.ndarray]
    gt_patches: list[np.ndarray]
    imu: list[ImuSample]
    gt_times: np.ndarray       # scan-end times
    gt_poses: list[Pose]       # body pose at each scan end


def _vertical_angles(count: int, lo_deg: float, hi_deg: float) -> np.ndarray:
    return np.deg2rad(np.linspace(lo_deg, hi_deg, count))


def standard_sequences() -> dict[str, FixtureSpec]:
    """The named, seeded fixtures every test and CLI example draws from."""
    specs = {}

    corridor_scene = box_interior((0.0, -2.0, -1.5), (20.0, 2.0, 1.5))
    corridor_traj = Trajectory(
        [StaticPiece(duration=1.0),
         SinusoidPiece(duration=59.0,
                       amplitudes=(16.0, 0.0, 0.1),
                       periods=(29.5, 1.0, 5.0),
                       yaw_amplitude=0.2, yaw_period=7.0,
                       pitch_amplitude=0.05, pitch_period=2.6,
                       roll_amplitude=0.06, roll_period=3.7)],
        start_pose=Pose(Rotation.identity(), (2.0, 0.0, 0.0)),
    )
    specs["corridor-60s"] = FixtureSpec(
        name="corridor-60s",
        scene=corridor_scene,
        trajectory=corridor_traj,
        model=LidarModel(ring_count=16, points_per_ring=360,
                         vertical_angles=_vertical_angles(16, -15.0, 15.0),
                         spin_rate=10.0, range_noise=0.01, max_range=45.0),
        duration=60.0, first_scan_time=1.0, imu_rate=200.0, seed=42_001)

    field_scene = [make_patch((0.0, 0.0, -1.2), (0.0, 0.0, 1.0), 40.0, 40.0,
                              up_hint=(1.0, 0.0, 0.0))]
    fence_spots = [(12.0, 3.0), (9.0, -8.0), (-10.0, 6.0), (-7.0, -11.0),
                   (2.0, 14.0), (-14.0, -2.0), (16.0, -5.0), (-4.0, 10.0)]
    for fx, fy in fence_spots:
        toward = -np.array([fx, fy, 0.0])
        toward = toward / np.linalg.norm(toward)
        field_scene.append(make_patch((fx, fy, 0.0), toward, 1.5, 1.2))
    field_traj = Trajectory(
        [StaticPiece(duration=1.0),
         SinusoidPiece(duration=19.0,
                       amplitudes=(3.0, 2.0, 0.0),
                       periods=(9.5, 19.0, 1.0),
                       yaw_amplitude=0.15, yaw_period=6.0)],
        start_pose=Pose(Rotation.identity(), (0.0, 0.0, 0.0)),
    )
    specs["openfield-sparse"] = FixtureSpec(
        name="openfield-sparse",
        scene=field_scene,
        trajectory=field_traj,
        model=LidarModel(ring_count=16, points_per_ring=360,
                         vertical_angles=_vertical_angles(16, -15.0, 15.0),
                         spin_rate=10.0, range_noise=0.01, max_range=45.0),
        duration=20.0, first_scan_time=1.0, imu_rate=200.0, seed=42_002)

    corner_scene = [
        make_patch((3.0, 0.0, 0.0), (-1.0, 0.0, 0.0), 4.0, 2.0),
        make_patch((0.0, 3.0, 0.0), (0.0, -1.0, 0.0), 4.0, 2.0),
        make_patch((0.0, 0.0, -1.2), (0.0, 0.0, 1.0), 6.0, 6.0,
                   up_hint=(1.0, 0.0, 0.0)),
    ]
    corner_traj = Trajectory([StaticPiece(duration=4.0)],
                             start_pose=Pose(Rotation.identity(), (-1.0, -1.0, 0.0)))
    specs["corner-room"] = FixtureSpec(
        name="corner-room",
        scene=corner_scene,
        trajectory=corner_traj,
        model=LidarModel(ring_count=16, points_per_ring=360,
                         vertical_angles=_vertical_angles(16, -15.0, 15.0),
                         spin_rate=10.0, range_noise=0.005, max_range=45.0),
        duration=3.0, first_scan_time=1.0, imu_rate=200.0, seed=42_003)

    return specs


def generate_fixture(name: str, seed: int | None = None,
                     range_noise: float | None = None,
                     imu_noise: ImuNoise | None = None,
                     duration: float | None = None) -> FixtureData:
    """Generate a named fixture, optionally overriding noise or length."""
    specs = standard_sequences()
    if name not in specs:
        raise KeyError(f"unknown fixture '{name}'; have {sorted(specs)}")
    spec = specs[name]
    if seed is not None or range_noise is not None or imu_noise is not None \
            or duration is not None:
        model = spec.model
        if range_noise is not None:
            model = LidarModel(model.ring_count, model.points_per_ring,
                               model.vertical_angles, model.spin_rate,
                               float(range_noise), model.max_range, model.min_range)
        spec = replace(spec, seed=seed if seed is not None else spec.seed,
                       model=model,
                       imu_noise=imu_noise if imu_noise is not None else spec.imu_noise,
                       duration=duration if duration is not None else spec.duration)

    rng = np.random.default_rng(spec.seed)
    traj = spec.trajectory
    scan_period = 1.0 / spec.model.spin_rate
    scans, gt_normals, gt_patches, gt_poses, gt_times = [], [], [], [], []
    t = spec.first_scan_time
    while t + scan_period <= spec.duration + 1e-9:
        scan, nrm, pid = simulate_lidar(spec.scene, traj.pose, spec.model, t, rng)
        scans.append(scan)
        gt_normals.append(nrm)
        gt_patches.append(pid)
        gt_times.append(scan.scan_end)
        gt_poses.append(traj.pose(scan.scan_end))
        t += scan_period
    imu = simulate_imu(traj, 0.0, spec.duration, spec.imu_rate, spec.imu_noise,
                       spec.gyro_bias, spec.accel_bias, spec.gravity, rng)
    return FixtureData(spec=spec, scans=scans, gt_normals=gt_normals,
                       gt_patches=gt_patches, imu=imu,
                       gt_times=np.array(gt_times), gt_poses=gt_poses)
