"""Request/response models for the odometry HTTP service.

Scans travel as base64-encoded bytes in the same binary layout the scan
files use, so the service and the file tooling share one parser.  IMU
samples are rows of [t, wx, wy, wz, ax, ay, az].
"""

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class CreateSessionRequest(BaseModel):
    config_text: str = ""   # key=value lines; empty means defaults


class CreateSessionResponse(BaseModel):
    session_id: str


class ImuRequest(BaseModel):
    samples: list[list[float]] = Field(default_factory=list)


class ImuResponse(BaseModel):
    added: int


class ScanRequest(BaseModel):
    scan_b64: str
    imu: list[list[float]] = Field(default_factory=list)


class PoseEntry(BaseModel):
    timestamp: float
    tx: float
    ty: float
    tz: float
    qx: float
    qy: float
    qz: float
    qw: float


class ScanResponse(BaseModel):
    pose: PoseEntry
    diagnostics: dict


class TrajectoryResponse(BaseModel):
    entries: list[PoseEntry]


class MapResponse(BaseModel):
    voxels: int
    retained_points: int
    surfels: int
    points: list[list[float]]
    truncated: bool


class NormalsRequest(BaseModel):
    scans_b64: list[str]
    window: int = 5
    min_occupancy: float = 0.6
    condition_cap: float = 1e6
    oracle: bool = False
    oracle_k: int = 25


class NormalsScanResult(BaseModel):
    points: int
    valid: int
    normals_b64: str    # float32 (N, 3), NaN rows for invalid points
    oracle_median_angle_deg: float | None = None
    oracle_mean_angle_deg: float | None = None


class NormalsResponse(BaseModel):
    scans: list[NormalsScanResult]


class EvalRequest(BaseModel):
    estimate_tum: str
    truth_tum: str
    max_dt: float = 0.010


class EvalResponse(BaseModel):
    ate_rmse: float
    matched_pairs: int
