"""Hierarchical data association: point-to-surfel first, plane fallback.

Each query point with a valid measured normal is matched against the map
in three stages of decreasing preference:

1. LARGE surfel: the distributions of the voxels owning the query's
   surviving neighbors are merged; if the merged distribution is a surfel
   and the constituent voxels are genuinely coplanar with it, the merged
   plane is the match.
2. SMALL surfel: otherwise, the fixed surfel of the voxel containing the
   query point, when there is one.
3. PLANE: otherwise, an exact least-squares plane through the surviving
   neighbor points, accepted only when all of them hug it.

Neighbors are filtered before any of that: a neighbor whose stored normal
faces away from the sensor ray is dropped (double-sided surface guard),
and the whole candidate set is rejected when the surviving normals do
not broadly agree with the query normal.
"""

from dataclasses import dataclass, field

import numpy as np

from .pca_normals import fit_plane
from .voxel_map import MapIndex
from .voxel_stats import SCALE_LARGE, SurfelThresholds, merge

KIND_LARGE = "large_surfel"
KIND_SMALL = "small_surfel"
KIND_PLANE = "plane"


@dataclass(frozen=True)
class Correspondence:
    kind: str
    normal: np.ndarray
    anchor: np.ndarray
    noise: float


@dataclass(frozen=True)
class AssocConfig:
    k: int = 5
    max_radius: float = 2.0
    alpha_deg: float = 60.0
    merge_plane_distance: float = 0.1
    plane_fit_tolerance: float = 0.1
    noise_plane: float = 1e-2
    noise_small: float = 5e-3
    noise_large: float = 2e-3
    thresholds: SurfelThresholds = field(default_factory=SurfelThresholds)
    use_hierarchy: bool = True


def visibility_check(map_normal, point_world, sensor_origin_world) -> bool:
    """True when the map normal does not face away from the sensor ray.

    The boundary (normal perpendicular to the ray) is inclusive.  NaN
    normals fail the check.
    """
    ray = np.asarray(sensor_origin_world, dtype=float) - np.asarray(point_world, dtype=float)
    dot = float(np.dot(np.asarray(map_normal, dtype=float), ray))
    return bool(dot >= 0.0)


def consistency_check(query_normal, neighbor_normals, alpha_deg: float) -> bool:
    """Mean sign-insensitive angle between query and neighbor normals <= alpha."""
    nbrs = np.asarray(neighbor_normals, dtype=float).reshape(-1, 3)
    if len(nbrs) == 0:
        return False
    q = np.asarray(query_normal, dtype=float)
    dots = np.abs(nbrs @ q)
    angles = np.degrees(np.arccos(np.clip(dots, 0.0, 1.0)))
    return bool(angles.mean() <= alpha_deg)


def associate(map_index: MapIndex, point_world, query_normal_world,
              sensor_origin_world, cfg: AssocConfig) -> Correspondence | None:
    """Match one query point to at most one map constraint."""
    p = np.asarray(point_world, dtype=float)
    qn = np.asarray(query_normal_world, dtype=float)
    origin = np.asarray(sensor_origin_world, dtype=float)

    pts, normals, keys, _ = map_index.knn(p, cfg.k, cfg.max_radius)
    return _match_neighbors(map_index, p, qn, origin, pts, normals, keys, cfg)


def _match_neighbors(map_index: MapIndex, p, qn, origin, pts, normals, keys,
                     cfg: AssocConfig) -> Correspondence | None:
    """Visibility + consistency gates, then the scale hierarchy."""
    if len(pts) == 0:
        return None
    rays = origin - pts
    vis = np.einsum("ij,ij->i", np.nan_to_num(normals, nan=-np.inf), rays) >= 0.0
    if not np.any(vis):
        return None
    pts, normals, keys = pts[vis], normals[vis], keys[vis]

    if not consistency_check(qn, normals, cfg.alpha_deg):
        return None

    if cfg.use_hierarchy:
        corr = _try_large(map_index, keys, qn, cfg)
        if corr is not None:
            return corr
        corr = _try_small(map_index, p, cfg)
        if corr is not None:
            return corr

    return _try_plane(pts, qn, cfg)


def _try_large(map_index: MapIndex, keys: np.ndarray, query_normal,
               cfg: AssocConfig) -> Correspondence | None:
    owner_keys = []
    seen = set()
    for key in map(tuple, keys):
        if key not in seen:
            seen.add(key)
            owner_keys.append(key)
    owners = [map_index.voxel(k) for k in owner_keys]
    owners = [v for v in owners if v is not None]
    if not owners:
        return None
    merged = owners[0].copy()
    merged.fixed = False
    merged.fixed_surfel = None
    for v in owners[1:]:
        merged = merge(merged, v)
    view = merged.classify(cfg.thresholds, scale=SCALE_LARGE)
    if view is None:
        return None
    for v in owners:
        offset = abs(float((v.mean() - view.mean) @ view.normal))
        if offset > cfg.merge_plane_distance:
            return None
    return Correspondence(KIND_LARGE, view.normal, view.mean, cfg.noise_large)


def _try_small(map_index: MapIndex, point_world,
               cfg: AssocConfig) -> Correspondence | None:
    vox = map_index.voxel_of(point_world)
    if vox is None or not vox.fixed:
        return None
    view = vox.classify(cfg.thresholds)
    if view is None:
        return None
    return Correspondence(KIND_SMALL, view.normal, view.mean, cfg.noise_small)


def _try_plane(neighbor_pts: np.ndarray, query_normal,
               cfg: AssocConfig) -> Correspondence | None:
    if len(neighbor_pts) < 3:
        return None
    normal, centroid = fit_plane(neighbor_pts)
    offsets = np.abs((neighbor_pts - centroid) @ normal)
    if np.any(offsets > cfg.plane_fit_tolerance):
        return None
    if float(normal @ np.asarray(query_normal, dtype=float)) < 0.0:
        normal = -normal
    return Correspondence(KIND_PLANE, normal, centroid, cfg.noise_plane)


def associate_scan(map_index: MapIndex, points_world, normals_world,
                   sensor_origin_world, cfg: AssocConfig):
    """Associate every point of a scan; returns (matches, histogram).

    Points with NaN normals are skipped.  ``matches`` is a list aligned
    with the input points, holding a Correspondence or None.
    """
    pts = np.asarray(points_world, dtype=float).reshape(-1, 3)
    nms = np.asarray(normals_world, dtype=float).reshape(-1, 3)
    origin = np.asarray(sensor_origin_world, dtype=float)
    hist = {KIND_LARGE: 0, KIND_SMALL: 0, KIND_PLANE: 0, "none": 0, "skipped": 0}
    matches: list[Correspondence | None] = [None] * len(pts)

    usable = np.all(np.isfinite(nms), axis=1)
    hist["skipped"] = int((~usable).sum())
    queries = np.flatnonzero(usable)
    if len(queries) == 0:
        return matches, hist

    _, idx = map_index.knn_batch(pts[queries], cfg.k, cfg.max_radius)
    _, map_pts, map_nms, map_keys = map_index.neighbor_index()
    for row, i in enumerate(queries):
        nbr = idx[row]
        nbr = nbr[nbr >= 0]
        corr = _match_neighbors(map_index, pts[i], nms[i], origin,
                                map_pts[nbr], map_nms[nbr], map_keys[nbr],
                                cfg)
        if corr is None:
            hist["none"] += 1
        else:
            hist[corr.kind] += 1
        matches[i] = corr
    return matches, hist
