"""File formats: binary ring scans, IMU CSV, TUM trajectories, diagnostics.

Scan files ("RSCN") are little-endian binary with a fixed 32-byte header
followed by 20-byte point records.  IMU data is a plain CSV with a fixed
header row.  Trajectories use the TUM line format
``timestamp tx ty tz qx qy qz qw``.  Diagnostics are JSON lines.
"""

import json
import struct

import numpy as np

from .core import ImuSample, Pose, Rotation
from .errors import (BadMagicError, BadVersionError, EvaluationError,
                     ImuCsvError, TrajectoryFormatError, TruncatedFileError)
from .scan import RingScan

_MAGIC = b"RSCN"
_VERSION = 1
_HEADER = struct.Struct("<4sHHIIdd")   # magic, version, rings, cols, count, t0, t1
_POINT_DTYPE = np.dtype([
    ("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
    ("ring", "<u2"), ("pad", "<u2"), ("time_offset", "<f4"),
])


def scan_to_bytes(scan: RingScan) -> bytes:
    """Serialize a scan; positions and time offsets are stored as f32."""
    records = np.zeros(len(scan), dtype=_POINT_DTYPE)
    records["x"] = scan.positions[:, 0].astype(np.float32)
    records["y"] = scan.positions[:, 1].astype(np.float32)
    records["z"] = scan.positions[:, 2].astype(np.float32)
    records["ring"] = scan.rings.astype(np.uint16)
    records["time_offset"] = scan.time_offsets.astype(np.float32)
    header = _HEADER.pack(_MAGIC, _VERSION, scan.ring_count,
                          scan.points_per_ring, len(scan),
                          scan.scan_start, scan.scan_end)
    return header + records.tobytes()


def scan_from_bytes(raw: bytes, source: str = "<bytes>") -> RingScan:
    if len(raw) < 4 or raw[:4] != _MAGIC:
        raise BadMagicError(f"{source}: not a scan file (bad magic)")
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{source}: header truncated "
                                 f"({len(raw)} of {_HEADER.size} bytes)")
    _, version, rings, cols, count, t0, t1 = _HEADER.unpack_from(raw, 0)
    if version != _VERSION:
        raise BadVersionError(f"{source}: version {version} not supported "
                              f"(expected {_VERSION})")
    body = raw[_HEADER.size:]
    expected = count * _POINT_DTYPE.itemsize
    if len(body) < expected:
        raise TruncatedFileError(f"{source}: expected {count} point records "
                                 f"({expected} bytes), found {len(body)}")
    records = np.frombuffer(body[:expected], dtype=_POINT_DTYPE)
    positions = np.stack([records["x"], records["y"], records["z"]],
                         axis=1).astype(np.float64) if count else np.empty((0, 3))
    return RingScan(positions=positions,
                    rings=records["ring"].astype(np.int64),
                    time_offsets=records["time_offset"].astype(np.float64),
                    scan_start=float(t0), scan_end=float(t1),
                    ring_count=int(rings), points_per_ring=int(cols))


def write_scan_file(path, scan: RingScan) -> None:
    with open(path, "wb") as fh:
        fh.write(scan_to_bytes(scan))


def read_scan_file(path) -> RingScan:
    with open(path, "rb") as fh:
        raw = fh.read()
    return scan_from_bytes(raw, source=str(path))


# ---------------------------------------------------------------------------
# IMU CSV

_IMU_HEADER = "t,wx,wy,wz,ax,ay,az"


def write_imu_csv(path, samples) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_IMU_HEADER + "\n")
        for s in samples:
            vals = [s.timestamp, *s.angular_velocity, *s.linear_acceleration]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def read_imu_csv(path) -> list[ImuSample]:
    samples: list[ImuSample] = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != _IMU_HEADER:
        raise ImuCsvError(f"expected header '{_IMU_HEADER}'", line=1)
    last_t = None
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ImuCsvError(f"expected 7 fields, got {len(parts)}", line=no)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise ImuCsvError(f"non-numeric field in '{line}'", line=no) from None
        if not all(np.isfinite(vals)):
            raise ImuCsvError("non-finite value", line=no)
        if last_t is not None and vals[0] <= last_t:
            raise ImuCsvError(f"timestamp {vals[0]!r} not increasing", line=no)
        last_t = vals[0]
        samples.append(ImuSample(vals[0], vals[1:4], vals[4:7]))
    return samples


# ---------------------------------------------------------------------------
# TUM trajectories


class Trajectory:
    """Timestamped pose sequence; timestamps strictly increasing."""

    def __init__(self, entries=()):
        self._times: list[float] = []
        self._poses: list[Pose] = []
        for t, pose in entries:
            self.append(t, pose)

    def append(self, timestamp: float, pose: Pose) -> None:
        timestamp = float(timestamp)
        if self._times and timestamp <= self._times[-1]:
            raise EvaluationError(
                f"trajectory timestamps must increase: {timestamp} after "
                f"{self._times[-1]}")
        self._times.append(timestamp)
        self._poses.append(pose)

    def __len__(self):
        return len(self._times)

    def __iter__(self):
        return iter(zip(self._times, self._poses))

    def __getitem__(self, i):
        return self._times[i], self._poses[i]

    @property
    def timestamps(self) -> np.ndarray:
        return np.array(self._times)

    @property
    def positions(self) -> np.ndarray:
        if not self._poses:
            return np.empty((0, 3))
        return np.stack([p.translation for p in self._poses])


def _fmt_value(v: float) -> str:
    return "%.12g" % v


def format_trajectory_tum(traj: Trajectory) -> str:
    lines = []
    for t, pose in traj:
        q = pose.rotation.quat  # w, x, y, z
        p = pose.translation
        fields = [f"{t:.9f}"] + [_fmt_value(v) for v in
                                 (p[0], p[1], p[2], q[1], q[2], q[3], q[0])]
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def write_trajectory_tum(path, traj: Trajectory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_trajectory_tum(traj))


def read_trajectory_tum(path) -> Trajectory:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trajectory_tum(fh.read())


def parse_trajectory_tum(text: str) -> Trajectory:
    traj = Trajectory()
    lines = text.splitlines()
    for no, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        parts = body.split()
        if len(parts) != 8:
            raise TrajectoryFormatError(f"expected 8 fields, got {len(parts)}",
                                        line=no)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise TrajectoryFormatError(f"non-numeric field in '{body}'",
                                        line=no) from None
        t, tx, ty, tz, qx, qy, qz, qw = vals
        quat = np.array([qw, qx, qy, qz])
        norm = float(np.linalg.norm(quat))
        if not np.isfinite(norm) or norm < 1e-6:
            raise TrajectoryFormatError("quaternion norm too small", line=no)
        try:
            traj.append(t, Pose(Rotation(quat / norm), (tx, ty, tz)))
        except EvaluationError as exc:
            raise TrajectoryFormatError(str(exc), line=no) from None
    return traj


# ---------------------------------------------------------------------------
# JSON-lines diagnostics


def write_diagnostics(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_diagnostics(path) -> list[dict]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
