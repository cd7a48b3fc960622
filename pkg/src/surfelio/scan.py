"""Ring-structured LiDAR scan containers.

A scan is stored struct-of-arrays: positions, ring indices, and per-point
time offsets.  Ranges and azimuths are derived from the positions, which
makes the range * bearing reconstruction exact by construction.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ScanValidationError


@dataclass(frozen=True)
class RingPoint:
    """Single-point view, mostly for tests and debugging."""

    position: np.ndarray
    ring: int
    time_offset: float
    range: float
    azimuth: float


class RingScan:
    """One revolution of a spinning LiDAR in the sensor frame.

    Args:
        positions: (N, 3) float array of hit points, sensor frame, meters.
        rings: (N,) integer row index of the emitting laser.
        time_offsets: (N,) seconds since scan_start for each point.
        scan_start, scan_end: absolute scan boundary times (seconds).
        ring_count: number of laser rows of the sensor.
        points_per_ring: azimuth steps per revolution (grid width).
    """

    __slots__ = ("positions", "rings", "time_offsets", "scan_start",
                 "scan_end", "ring_count", "points_per_ring")

    def __init__(self, positions, rings, time_offsets, scan_start, scan_end,
                 ring_count, points_per_ring, validate=True):
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 3)
        self.rings = np.asarray(rings, dtype=np.int64).reshape(-1)
        self.time_offsets = np.asarray(time_offsets, dtype=float).reshape(-1)
        self.scan_start = float(scan_start)
        self.scan_end = float(scan_end)
        self.ring_count = int(ring_count)
        self.points_per_ring = int(points_per_ring)
        if validate:
            self._validate()

    def _validate(self):
        n = len(self.positions)
        if len(self.rings) != n or len(self.time_offsets) != n:
            raise ScanValidationError("positions, rings, and time_offsets disagree in length")
        if not np.isfinite(self.scan_start) or not np.isfinite(self.scan_end):
            raise ScanValidationError("non-finite scan boundary times")
        if self.scan_end <= self.scan_start:
            raise ScanValidationError(
                f"scan_end ({self.scan_end}) must exceed scan_start ({self.scan_start})")
        if self.ring_count < 0 or self.points_per_ring < 0:
            raise ScanValidationError("negative grid dimensions")
        if n == 0:
            return
        if not np.all(np.isfinite(self.positions)):
            raise ScanValidationError("non-finite point positions")
        r = np.linalg.norm(self.positions, axis=1)
        if np.any(r <= 0.0):
            raise ScanValidationError("zero-range point (position at the sensor origin)")
        if np.any(self.rings < 0) or np.any(self.rings >= self.ring_count):
            raise ScanValidationError("ring index outside [0, ring_count)")
        span = self.scan_end - self.scan_start
        if (not np.all(np.isfinite(self.time_offsets))
                or np.any(self.time_offsets < 0.0)
                or np.any(self.time_offsets > span)):
            raise ScanValidationError("time_offset outside [0, scan duration]")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def ranges(self) -> np.ndarray:
        return np.linalg.norm(self.positions, axis=1)

    @property
    def azimuths(self) -> np.ndarray:
        """Horizontal angles in [0, 2*pi)."""
        az = np.arctan2(self.positions[:, 1], self.positions[:, 0])
        return np.mod(az, 2.0 * np.pi)

    @property
    def h_res(self) -> float:
        """Azimuth step of the column grid."""
        return 2.0 * np.pi / self.points_per_ring

    def point(self, i: int) -> RingPoint:
        p = self.positions[i]
        return RingPoint(
            position=p.copy(),
            ring=int(self.rings[i]),
            time_offset=float(self.time_offsets[i]),
            range=float(np.linalg.norm(p)),
            azimuth=float(np.mod(np.arctan2(p[1], p[0]), 2.0 * np.pi)),
        )
