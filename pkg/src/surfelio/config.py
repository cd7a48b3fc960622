"""Run configuration: every tunable, one flat key=value file.

The format is a plain text file, one `key = value` per line, `#` starts
a comment.  Unknown keys are rejected so a typo can't silently fall back
to a default.  `RunConfig.default()` is the single source of default
values; `default_config_text()` renders them as a commented template.
"""

from dataclasses import dataclass, fields

import numpy as np

from .association import AssocConfig
from .core import Pose, Rotation
from .errors import ConfigError
from .imu import ImuNoise
from .voxel_stats import SurfelThresholds


@dataclass(frozen=True)
class RunConfig:
    # map + surfels
    voxel_size: float = 0.5
    downsample_size: float = 0.5
    retained_per_voxel: int = 5
    surfel_min_points: int = 25
    surfel_fix_angle_deg: float = 20.0
    planarity_min: float = 0.95
    eigen_ratio_min: float = 100.0
    # association
    knn_k: int = 5
    max_search_radius: float = 2.0
    consistency_angle_deg: float = 60.0
    merge_plane_distance: float = 0.1
    plane_fit_tolerance: float = 0.1
    noise_large_surfel: float = 2e-3
    noise_small_surfel: float = 5e-3
    noise_plane: float = 1e-2
    use_hierarchy: bool = True
    # ring normals
    normal_window: int = 5
    min_occupancy: float = 0.6
    condition_cap: float = 1e6
    table_scans: int = 10
    # estimator
    max_iterations: int = 4
    convergence_tol: float = 1e-3
    update_gravity: bool = True
    reassociate_each_iteration: bool = False
    min_correspondences: int = 10
    imu_gap_limit: float = 0.1
    init_window: float = 0.5
    gravity_magnitude: float = 9.81
    gravity_norm_tolerance: float = 0.5
    # IMU noise densities
    gyro_noise: float = 1e-3
    accel_noise: float = 1e-2
    gyro_bias_noise: float = 1e-5
    accel_bias_noise: float = 1e-4
    # LiDAR-in-IMU extrinsic
    extrinsic_tx: float = 0.0
    extrinsic_ty: float = 0.0
    extrinsic_tz: float = 0.0
    extrinsic_qw: float = 1.0
    extrinsic_qx: float = 0.0
    extrinsic_qy: float = 0.0
    extrinsic_qz: float = 0.0

    @staticmethod
    def default() -> "RunConfig":
        return RunConfig()

    # -- adapters into the module-level config objects --

    def surfel_thresholds(self) -> SurfelThresholds:
        return SurfelThresholds(planarity_min=self.planarity_min,
                                eigen_ratio_min=self.eigen_ratio_min,
                                min_points=self.surfel_min_points)

    def assoc_config(self) -> AssocConfig:
        return AssocConfig(k=self.knn_k,
                           max_radius=self.max_search_radius,
                           alpha_deg=self.consistency_angle_deg,
                           merge_plane_distance=self.merge_plane_distance,
                           plane_fit_tolerance=self.plane_fit_tolerance,
                           noise_plane=self.noise_plane,
                           noise_small=self.noise_small_surfel,
                           noise_large=self.noise_large_surfel,
                           thresholds=self.surfel_thresholds(),
                           use_hierarchy=self.use_hierarchy)

    def imu_noise(self) -> ImuNoise:
        return ImuNoise(gyro_noise=self.gyro_noise,
                        accel_noise=self.accel_noise,
                        gyro_bias_walk=self.gyro_bias_noise,
                        accel_bias_walk=self.accel_bias_noise)

    def extrinsic(self) -> Pose:
        """LiDAR pose in the IMU frame."""
        q = np.array([self.extrinsic_qw, self.extrinsic_qx,
                      self.extrinsic_qy, self.extrinsic_qz])
        norm = float(np.linalg.norm(q))
        if norm < 1e-9:
            raise ConfigError("extrinsic quaternion has zero norm")
        return Pose(Rotation(q / norm),
                    (self.extrinsic_tx, self.extrinsic_ty, self.extrinsic_tz))


_FIELD_TYPES = {
    f.name: (f.type if isinstance(f.type, str) else f.type.__name__)
    for f in fields(RunConfig)
}


def _coerce(key: str, raw: str, line_no: int):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"key '{key}': expected true/false, got '{raw}'", line=line_no)
    try:
        if kind == "int":
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': cannot parse '{raw}' as {kind}",
                          line=line_no) from None


def parse_config(text: str) -> RunConfig:
    """Parse key=value text into a validated RunConfig."""
    values = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got '{body}'", line=line_no)
        key, raw = body.split("=", 1)
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key '{key}'", line=line_no)
        if key in values:
            raise ConfigError(f"duplicate key '{key}'", line=line_no)
        values[key] = _coerce(key, raw, line_no)
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def validate_config(cfg: RunConfig) -> None:
    """Range-check every field; raises ConfigError on the first violation."""
    def positive(name):
        if not getattr(cfg, name) > 0.0:
            raise ConfigError(f"{name} must be positive")

    for name in ("voxel_size", "downsample_size", "max_search_radius",
                 "merge_plane_distance", "plane_fit_tolerance",
                 "noise_large_surfel", "noise_small_surfel", "noise_plane",
                 "eigen_ratio_min", "convergence_tol", "imu_gap_limit",
                 "init_window", "gravity_magnitude", "gravity_norm_tolerance"):
        positive(name)
    for name, lo in (("retained_per_voxel", 1), ("surfel_min_points", 3),
                     ("knn_k", 1), ("table_scans", 1), ("max_iterations", 1),
                     ("min_correspondences", 3)):
        if getattr(cfg, name) < lo:
            raise ConfigError(f"{name} must be at least {lo}")
    if not (0.0 < cfg.surfel_fix_angle_deg < 90.0):
        raise ConfigError("surfel_fix_angle_deg must lie in (0, 90)")
    if not (0.0 < cfg.planarity_min <= 1.0):
        raise ConfigError("planarity_min must lie in (0, 1]")
    if not (0.0 < cfg.consistency_angle_deg <= 90.0):
        raise ConfigError("consistency_angle_deg must lie in (0, 90]")
    if cfg.normal_window < 3 or cfg.normal_window % 2 == 0:
        raise ConfigError("normal_window must be an odd integer >= 3")
    if not (0.0 < cfg.min_occupancy <= 1.0):
        raise ConfigError("min_occupancy must lie in (0, 1]")
    if cfg.condition_cap <= 1.0:
        raise ConfigError("condition_cap must exceed 1")
    for name in ("gyro_noise", "accel_noise", "gyro_bias_noise", "accel_bias_noise"):
        if getattr(cfg, name) < 0.0:
            raise ConfigError(f"{name} must be non-negative")
    cfg.extrinsic()  # validates quaternion norm


def default_config_text() -> str:
    """Render the defaults as a commented, loadable config template."""
    cfg = RunConfig.default()
    groups = [
        ("map and surfel classification",
         ["voxel_size", "downsample_size", "retained_per_voxel",
          "surfel_min_points", "surfel_fix_angle_deg", "planarity_min",
          "eigen_ratio_min"]),
        ("scan-to-map association",
         ["knn_k", "max_search_radius", "consistency_angle_deg",
          "merge_plane_distance", "plane_fit_tolerance", "noise_large_surfel",
          "noise_small_surfel", "noise_plane", "use_hierarchy"]),
        ("range-image normal estimation",
         ["normal_window", "min_occupancy", "condition_cap", "table_scans"]),
        ("state estimator",
         ["max_iterations", "convergence_tol", "update_gravity",
          "reassociate_each_iteration", "min_correspondences", "imu_gap_limit",
          "init_window", "gravity_magnitude", "gravity_norm_tolerance"]),
        ("IMU noise densities",
         ["gyro_noise", "accel_noise", "gyro_bias_noise", "accel_bias_noise"]),
        ("LiDAR pose in the IMU frame",
         ["extrinsic_tx", "extrinsic_ty", "extrinsic_tz", "extrinsic_qw",
          "extrinsic_qx", "extrinsic_qy", "extrinsic_qz"]),
    ]
    lines = []
    for title, keys in groups:
        lines.append(f"# {title}")
        for key in keys:
            value = getattr(cfg, key)
            if isinstance(value, bool):
                rendered = "true" if value else "false"
            else:
                rendered = repr(value)
            lines.append(f"{key} = {rendered}")
        lines.append("")
    return "\n".join(lines)
