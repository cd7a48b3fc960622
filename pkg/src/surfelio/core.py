"""Rotations, rigid transforms, and the navigation-state manifold.

Rotations are stored as unit quaternions (scalar first) and re-normalized
after every composition, so long products cannot drift off the group.
Matrices are produced on demand.

The error state is an 18-vector ordered as

    (rotation, position, velocity, gyro bias, accel bias, gravity)

with three components each; every covariance and Jacobian in the filter
follows this layout.  Rotation perturbations are applied on the right:
``R_new = R * exp(delta)``.
"""

from dataclasses import dataclass

import numpy as np

ERROR_DIM = 18
ROT = slice(0, 3)
POS = slice(3, 6)
VEL = slice(6, 9)
BG = slice(9, 12)
BA = slice(12, 15)
GRAV = slice(15, 18)

_EPS = 1e-12


def so3_hat(v) -> np.ndarray:
    """Skew-symmetric matrix such that so3_hat(a) @ b == cross(a, b)."""
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def so3_right_jacobian(phi) -> np.ndarray:
    """Right Jacobian of SO(3): d/d(dphi) log(exp(phi)^-1 exp(phi + dphi))."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = so3_hat(phi)
    if theta < 1e-5:
        return np.eye(3) - 0.5 * K + (K @ K) / 6.0
    a = (1.0 - np.cos(theta)) / theta**2
    b = (theta - np.sin(theta)) / theta**3
    return np.eye(3) - a * K + b * (K @ K)


def so3_right_jacobian_inv(phi) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    K = so3_hat(phi)
    if theta < 1e-5:
        return np.eye(3) + 0.5 * K + (K @ K) / 12.0
    c = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) + 0.5 * K + c * (K @ K)


class Rotation:
    """Unit-quaternion rotation, world-from-body convention."""

    __slots__ = ("_q",)

    def __init__(self, quat):
        q = np.asarray(quat, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < _EPS:
            raise ValueError("quaternion has zero or non-finite norm")
        self._q = q / n

    @classmethod
    def identity(cls) -> "Rotation":
        return cls((1.0, 0.0, 0.0, 0.0))

    @classmethod
    def exp(cls, rotvec) -> "Rotation":
        """Exponential map from a rotation vector (axis * angle)."""
        v = np.asarray(rotvec, dtype=float).reshape(3)
        theta = np.linalg.norm(v)
        if theta < 1e-10:
            # first-order quaternion; normalization in __init__ cleans it up
            return cls(np.concatenate(([1.0], 0.5 * v)))
        axis = v / theta
        half = 0.5 * theta
        return cls(np.concatenate(([np.cos(half)], np.sin(half) * axis)))

    @classmethod
    def from_matrix(cls, m) -> "Rotation":
        m = np.asarray(m, dtype=float).reshape(3, 3)
        t = np.trace(m)
        if t > 0:
            s = np.sqrt(t + 1.0) * 2.0
            q = np.array([0.25 * s, (m[2, 1] - m[1, 2]) / s,
                          (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s])
        else:
            i = int(np.argmax(np.diag(m)))
            j, k = (i + 1) % 3, (i + 2) % 3
            s = np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2.0
            q = np.empty(4)
            q[0] = (m[k, j] - m[j, k]) / s
            q[1 + i] = 0.25 * s
            q[1 + j] = (m[j, i] + m[i, j]) / s
            q[1 + k] = (m[k, i] + m[i, k]) / s
        return cls(q)

    @property
    def quat(self) -> np.ndarray:
        """Unit quaternion as (w, x, y, z)."""
        return self._q.copy()

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self._q
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def log(self) -> np.ndarray:
        """Rotation vector with norm <= pi.

        At exactly pi the axis sign is ambiguous; whichever sign the stored
        quaternion carries is returned.
        """
        q = self._q if self._q[0] >= 0.0 else -self._q
        w = min(q[0], 1.0)
        vec = q[1:]
        s = np.linalg.norm(vec)
        if s < 1e-10:
            return 2.0 * vec / w  # small angle: theta ~ 2 s, axis ~ vec/s
        theta = 2.0 * np.arctan2(s, w)
        return (theta / s) * vec

    def inverse(self) -> "Rotation":
        w, x, y, z = self._q
        return Rotation((w, -x, -y, -z))

    def __mul__(self, other: "Rotation") -> "Rotation":
        w1, x1, y1, z1 = self._q
        w2, x2, y2, z2 = other._q
        return Rotation((
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ))

    def apply(self, vectors) -> np.ndarray:
        """Rotate one (3,) vector or a stack (..., 3) of vectors."""
        v = np.asarray(vectors, dtype=float)
        return v @ self.as_matrix().T

    def slerp(self, other: "Rotation", alpha: float) -> "Rotation":
        """Spherical interpolation; alpha = 0 gives self, 1 gives other."""
        q0, q1 = self._q, other._q
        dot = float(np.dot(q0, q1))
        if dot < 0.0:
            q1, dot = -q1, -dot
        if dot > 1.0 - 1e-10:
            return Rotation(q0 + alpha * (q1 - q0))
        theta = np.arccos(min(dot, 1.0))
        s = np.sin(theta)
        return Rotation((np.sin((1 - alpha) * theta) / s) * q0
                        + (np.sin(alpha * theta) / s) * q1)

    def angle_to(self, other: "Rotation") -> float:
        """Geodesic angle in radians between two rotations."""
        return float(np.linalg.norm((self.inverse() * other).log()))

    def __repr__(self):
        w, x, y, z = self._q
        return f"Rotation(w={w:.6f}, x={x:.6f}, y={y:.6f}, z={z:.6f})"


class Pose:
    """Rigid transform: p_out = rotation @ p_in + translation."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Rotation, translation):
        self.rotation = rotation
        self.translation = np.asarray(translation, dtype=float).reshape(3).copy()

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(Rotation.from_matrix(m[:3, :3]), m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation.as_matrix()
        m[:3, 3] = self.translation
        return m

    def __mul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation * other.rotation,
                    self.rotation.apply(other.translation) + self.translation)

    def inverse(self) -> "Pose":
        rinv = self.rotation.inverse()
        return Pose(rinv, -rinv.apply(self.translation))

    def apply(self, points) -> np.ndarray:
        return self.rotation.apply(points) + self.translation

    def __repr__(self):
        t = self.translation
        return f"Pose(t=[{t[0]:.4f}, {t[1]:.4f}, {t[2]:.4f}], {self.rotation!r})"


def _vec3(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(3).copy()


@dataclass(frozen=True)
class NavState:
    """Full navigation state: pose, velocity, IMU biases, and gravity.

    All vectors are world-frame except the biases, which live in the body
    frame.  Gravity is carried as a free world vector so the filter can
    refine its direction.
    """

    rotation: Rotation
    position: np.ndarray
    velocity: np.ndarray
    gyro_bias: np.ndarray
    accel_bias: np.ndarray
    gravity: np.ndarray

    def __post_init__(self):
        for name in ("position", "velocity", "gyro_bias", "accel_bias", "gravity"):
            object.__setattr__(self, name, _vec3(getattr(self, name)))

    @classmethod
    def identity(cls, gravity=(0.0, 0.0, -9.81)) -> "NavState":
        z = np.zeros(3)
        return cls(Rotation.identity(), z, z, z, z, _vec3(gravity))

    def pose(self) -> Pose:
        return Pose(self.rotation, self.position)

    def is_finite(self) -> bool:
        vecs = (self.position, self.velocity, self.gyro_bias,
                self.accel_bias, self.gravity, self.rotation.quat)
        return all(np.all(np.isfinite(v)) for v in vecs)


@dataclass(frozen=True)
class ImuSample:
    """One inertial measurement: body angular rate and specific force."""

    timestamp: float
    angular_velocity: np.ndarray
    linear_acceleration: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "angular_velocity", _vec3(self.angular_velocity))
        object.__setattr__(self, "linear_acceleration", _vec3(self.linear_acceleration))


def box_plus(state: NavState, delta) -> NavState:
    """Apply an 18-dim tangent perturbation to a NavState.

    The rotation block multiplies on the right by its exponential; every
    other block adds componentwise.
    """
    d = np.asarray(delta, dtype=float).reshape(ERROR_DIM)
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite error-state delta")
    return NavState(
        rotation=state.rotation * Rotation.exp(d[ROT]),
        position=state.position + d[POS],
        velocity=state.velocity + d[VEL],
        gyro_bias=state.gyro_bias + d[BG],
        accel_bias=state.accel_bias + d[BA],
        gravity=state.gravity + d[GRAV],
    )


def box_minus(a: NavState, b: NavState) -> np.ndarray:
    """Tangent difference such that box_plus(b, box_minus(a, b)) == a."""
    d = np.empty(ERROR_DIM)
    d[ROT] = (b.rotation.inverse() * a.rotation).log()
    d[POS] = a.position - b.position
    d[VEL] = a.velocity - b.velocity
    d[BG] = a.gyro_bias - b.gyro_bias
    d[BA] = a.accel_bias - b.accel_bias
    d[GRAV] = a.gravity - b.gravity
    return d
