"""surfelio: LiDAR-inertial odometry on a surfel voxel map.

Normals come from the sensor's ring structure (a precomputed per-cell
least-squares table makes them a few matrix products per scan), the map
keeps an incrementally-updated Gaussian distribution per voxel, and an
iterated error-state Kalman filter fuses IMU propagation with point-to-
surfel and point-to-plane constraints.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config, parse_config
from .core import ImuSample, NavState, Pose, Rotation
from .errors import SurfelioError
from .pipeline import OdometryPipeline, ScanResult
from .scan import RingScan

__all__ = [
    "ImuSample",
    "NavState",
    "OdometryPipeline",
    "Pose",
    "RingScan",
    "Rotation",
    "RunConfig",
    "ScanResult",
    "SurfelioError",
    "__version__",
    "load_config",
    "parse_config",
]
