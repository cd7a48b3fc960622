"""Strapdown IMU propagation with error-state covariance.

Integration is midpoint: each step advances the orientation with the
averaged bias-corrected angular rate, then advances velocity and position
with the average of the specific force rotated at both step endpoints
plus gravity.  The 18x18 covariance follows through the first-order
error-state transition, and every integration step is recorded in a
pose buffer so the deskew stage can interpolate a pose for any point
firing time inside the scan.
"""

import bisect
from dataclasses import dataclass

import numpy as np

from .core import (BA, BG, ERROR_DIM, GRAV, POS, ROT, VEL, ImuSample, NavState,
                   Pose, Rotation, so3_hat, so3_right_jacobian)
from .errors import PropagationError


@dataclass(frozen=True)
class ImuNoise:
    """Continuous-time noise densities of the inertial sensor."""

    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_bias_walk: float = 1e-5
    accel_bias_walk: float = 1e-4


@dataclass
class FilterState:
    nav: NavState
    cov: np.ndarray  # (18, 18)


class PoseBuffer:
    """Time-indexed poses and velocities recorded during propagation."""

    def __init__(self):
        self.times: list[float] = []
        self.rotations: list[Rotation] = []
        self.positions: list[np.ndarray] = []
        self.velocities: list[np.ndarray] = []

    def append(self, t: float, rotation: Rotation, position, velocity) -> None:
        if self.times and t <= self.times[-1]:
            raise PropagationError("pose buffer timestamps must strictly increase")
        self.times.append(float(t))
        self.rotations.append(rotation)
        self.positions.append(np.asarray(position, dtype=float).copy())
        self.velocities.append(np.asarray(velocity, dtype=float).copy())

    def covers(self, t: float) -> bool:
        return bool(self.times) and self.times[0] <= t <= self.times[-1]

    def pose_at(self, t: float) -> Pose:
        """Interpolated pose (slerp rotation, lerp translation) at time t."""
        if not self.covers(t):
            raise PropagationError(f"time {t} outside pose buffer "
                                   f"[{self.times[0] if self.times else '-'}, "
                                   f"{self.times[-1] if self.times else '-'}]")
        i = bisect.bisect_right(self.times, t) - 1
        if i >= len(self.times) - 1:
            return Pose(self.rotations[-1], self.positions[-1])
        t0, t1 = self.times[i], self.times[i + 1]
        a = (t - t0) / (t1 - t0)
        rot = self.rotations[i].slerp(self.rotations[i + 1], a)
        pos = (1.0 - a) * self.positions[i] + a * self.positions[i + 1]
        return Pose(rot, pos)


def _interp_sample(samples: list[ImuSample], times: np.ndarray,
                   t: float) -> tuple[np.ndarray, np.ndarray]:
    """Measurement linearly interpolated at t, clamped at the stream ends."""
    if t <= times[0]:
        s = samples[0]
        return s.angular_velocity, s.linear_acceleration
    if t >= times[-1]:
        s = samples[-1]
        return s.angular_velocity, s.linear_acceleration
    i = int(np.searchsorted(times, t, side="right")) - 1
    s0, s1 = samples[i], samples[i + 1]
    a = (t - times[i]) / (times[i + 1] - times[i])
    w = (1.0 - a) * s0.angular_velocity + a * s1.angular_velocity
    f = (1.0 - a) * s0.linear_acceleration + a * s1.linear_acceleration
    return w, f


def imu_propagate(state: FilterState, samples, noise: ImuNoise,
                  t_start: float, t_end: float,
                  max_gap: float = 0.1) -> tuple[FilterState, PoseBuffer]:
    """Propagate the filter state from t_start to t_end through the samples.

    Raises:
        PropagationError: the samples leave a gap larger than ``max_gap``
            anywhere inside the window, or do not reach the window at all.
    """
    if t_end <= t_start:
        raise PropagationError("t_end must exceed t_start")
    samples = list(samples)
    if not samples:
        raise PropagationError("no IMU samples supplied")
    times = np.array([s.timestamp for s in samples])
    if np.any(np.diff(times) <= 0.0):
        raise PropagationError("IMU timestamps must strictly increase")
    if times[0] > t_start + max_gap or times[-1] < t_end - max_gap:
        raise PropagationError(
            f"IMU stream [{times[0]:.4f}, {times[-1]:.4f}] does not cover "
            f"[{t_start:.4f}, {t_end:.4f}] within the {max_gap} s gap limit")
    inside = (times > t_start) & (times < t_end)
    breakpoints = np.concatenate(([t_start], times[inside], [t_end]))
    gaps = np.diff(breakpoints)
    if np.any(gaps > max_gap):
        raise PropagationError("IMU gap inside the propagation window exceeds limit")

    nav = state.nav
    cov = state.cov.copy()
    rot = nav.rotation
    pos = nav.position.copy()
    vel = nav.velocity.copy()
    bg, ba, grav = nav.gyro_bias, nav.accel_bias, nav.gravity

    buffer = PoseBuffer()
    buffer.append(t_start, rot, pos, vel)

    for j in range(len(breakpoints) - 1):
        ta, tb = breakpoints[j], breakpoints[j + 1]
        dt = tb - ta
        if dt <= 0.0:
            continue
        w_a, f_a = _interp_sample(samples, times, ta)
        w_b, f_b = _interp_sample(samples, times, tb)
        w_mid = 0.5 * (w_a + w_b) - bg
        acc_a = f_a - ba
        acc_b = f_b - ba

        rot_b = rot * Rotation.exp(w_mid * dt)
        a_world = 0.5 * (rot.apply(acc_a) + rot_b.apply(acc_b)) + grav
        pos = pos + vel * dt + 0.5 * a_world * dt * dt
        vel = vel + a_world * dt

        rmat = rot.as_matrix()
        phi = w_mid * dt
        F = np.eye(ERROR_DIM)
        F[ROT, ROT] = Rotation.exp(phi).as_matrix().T
        F[ROT, BG] = -so3_right_jacobian(phi) * dt
        F[POS, VEL] = np.eye(3) * dt
        F[VEL, ROT] = -rmat @ so3_hat(acc_a) * dt
        F[VEL, BA] = -rmat * dt
        F[VEL, GRAV] = np.eye(3) * dt
        Q = np.zeros((ERROR_DIM, ERROR_DIM))
        Q[ROT, ROT] = np.eye(3) * noise.gyro_noise**2 * dt
        Q[VEL, VEL] = np.eye(3) * noise.accel_noise**2 * dt
        Q[BG, BG] = np.eye(3) * noise.gyro_bias_walk**2 * dt
        Q[BA, BA] = np.eye(3) * noise.accel_bias_walk**2 * dt
        cov = F @ cov @ F.T + Q
        cov = 0.5 * (cov + cov.T)

        rot = rot_b
        buffer.append(tb, rot, pos, vel)

    out_nav = NavState(rotation=rot, position=pos, velocity=vel,
                       gyro_bias=bg, accel_bias=ba, gravity=grav)
    return FilterState(out_nav, cov), buffer


def initialize_gravity(samples, window: float = 0.5,
                       gravity_magnitude: float = 9.81):
    """Gravity vector and gyro bias from an initial standstill.

    Averages the first ``window`` seconds of measurements: the accel mean
    direction (negated, scaled to the configured magnitude) is gravity in
    the initial body frame, and the gyro mean is the gyro bias.

    Returns:
        (gravity (3,), gyro_bias (3,))
    """
    samples = list(samples)
    if not samples:
        raise PropagationError("no IMU samples for gravity initialization")
    t0 = samples[0].timestamp
    chunk = [s for s in samples if s.timestamp <= t0 + window]
    if len(chunk) < 2 or chunk[-1].timestamp - t0 < 0.9 * window:
        raise PropagationError(
            f"need {window} s of standstill IMU data to initialize gravity")
    acc = np.mean([s.linear_acceleration for s in chunk], axis=0)
    gyr = np.mean([s.angular_velocity for s in chunk], axis=0)
    norm = np.linalg.norm(acc)
    if norm < 1e-6:
        raise PropagationError("standstill accelerometer mean is zero")
    gravity = -gravity_magnitude * acc / norm
    return gravity, gyr
