"""Incremental world-frame map: voxel-keyed distributions plus exact kNN.

Points are bucketed into a hash of voxels at a fixed resolution.  Each
voxel owns a :class:`VoxelStats` distribution fed by every point that
ever lands in it, and retains a small bounded sample of actual points
for nearest-neighbor queries.  kNN is answered exactly by scanning
voxels shell by shell outward from the query cell and stopping once no
unvisited shell can beat the current k-th distance.
"""

import numpy as np

from .voxel_stats import SurfelThresholds, VoxelStats


def voxel_key(p, resolution: float):
    """Integer voxel coordinates of a point, floor convention per axis."""
    p = np.asarray(p, dtype=float)
    k = np.floor(p / resolution).astype(np.int64)
    return int(k[0]), int(k[1]), int(k[2])


def voxel_keys(points, resolution: float) -> np.ndarray:
    """Vectorized voxel_key: (N, 3) int64 array."""
    return np.floor(np.asarray(points, dtype=float) / resolution).astype(np.int64)


class _VoxelPoints:
    """Bounded per-voxel point sample backing the kNN queries."""

    __slots__ = ("pts", "normals", "seqs", "count")

    def __init__(self, cap: int):
        self.pts = np.empty((cap, 3))
        self.normals = np.full((cap, 3), np.nan)
        self.seqs = np.empty(cap, dtype=np.int64)
        self.count = 0


class MapIndex:
    """Voxel-hash map with exact k-nearest-neighbor queries.

    Args:
        resolution: voxel edge length in meters.
        retained_per_voxel: how many individual points a voxel keeps for
            kNN; the distribution always sees every point regardless.
        thresholds: surfel classification thresholds; ``min_points`` also
            drives the fixing policy.
        fix_angle_deg: normal-agreement cone for fixing a voxel.
    """

    def __init__(self, resolution: float, retained_per_voxel: int = 5,
                 thresholds: SurfelThresholds | None = None,
                 fix_angle_deg: float = 20.0):
        if resolution <= 0.0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.cap = int(retained_per_voxel)
        self.thresholds = thresholds or SurfelThresholds()
        self.fix_angle_deg = float(fix_angle_deg)
        self._voxels: dict[tuple[int, int, int], VoxelStats] = {}
        self._points: dict[tuple[int, int, int], _VoxelPoints] = {}
        self._seq = 0
        self._snapshot = None
        self.points_seen = 0
        self.points_accumulated = 0

    def __len__(self) -> int:
        return len(self._voxels)

    @property
    def retained_count(self) -> int:
        return sum(vp.count for vp in self._points.values())

    def insert_scan(self, points_world, normals_world=None) -> None:
        """Insert one scan's worth of world-frame points.

        Normals may be omitted; the distributions then skip normal
        accumulation and the retained entries carry NaN normals.
        """
        pts = np.asarray(points_world, dtype=float).reshape(-1, 3)
        if len(pts) == 0:
            return
        nms = None
        if normals_world is not None:
            nms = np.asarray(normals_world, dtype=float).reshape(-1, 3)
        keys = voxel_keys(pts, self.resolution)
        order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
        sorted_keys = keys[order]
        boundaries = np.flatnonzero(np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)) + 1
        groups = np.split(order, boundaries)
        self.points_seen += len(pts)
        for group in groups:
            key = (int(keys[group[0], 0]), int(keys[group[0], 1]), int(keys[group[0], 2]))
            vox = self._voxels.get(key)
            if vox is None:
                vox = VoxelStats()
                self._voxels[key] = vox
            if not vox.fixed:
                vox.accumulate(pts[group], None if nms is None else nms[group])
                self.points_accumulated += len(group)
                if vox.n >= self.thresholds.min_points:
                    vox.try_fix(self.thresholds.min_points, self.fix_angle_deg)
            vp = self._points.get(key)
            if vp is None:
                vp = _VoxelPoints(self.cap)
                self._points[key] = vp
            room = self.cap - vp.count
            if room > 0:
                take = group[:room]
                sl = slice(vp.count, vp.count + len(take))
                vp.pts[sl] = pts[take]
                if nms is not None:
                    vp.normals[sl] = nms[take]
                vp.seqs[sl] = self._seq + np.arange(len(take))
                vp.count += len(take)
            self._seq += len(group)
        self._snapshot = None

    def neighbor_index(self):
        """A read-only snapshot for bulk queries: (tree, pts, normals, keys).

        The KD-tree spans every retained point; it is cached until the
        next insert.  ``tree`` is None while the map is empty.
        """
        if self._snapshot is None:
            if not self._points:
                self._snapshot = (None, np.empty((0, 3)), np.empty((0, 3)),
                                  np.empty((0, 3), dtype=np.int64))
            else:
                from scipy.spatial import cKDTree
                pts, nms, keys = [], [], []
                for key, vp in self._points.items():
                    pts.append(vp.pts[:vp.count])
                    nms.append(vp.normals[:vp.count])
                    keys.append(np.broadcast_to(np.asarray(key, dtype=np.int64),
                                                (vp.count, 3)))
                pts = np.concatenate(pts)
                self._snapshot = (cKDTree(pts), pts, np.concatenate(nms),
                                  np.concatenate(keys))
        return self._snapshot

    def knn_batch(self, queries, k: int, max_radius: float):
        """kNN for many queries at once via the snapshot KD-tree.

        Returns (dists, idx) of shape (M, k); slots beyond a query's
        neighbor count hold inf / -1.  Indices address the snapshot's
        point/normal/key arrays.
        """
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        tree, pts, _, _ = self.neighbor_index()
        if tree is None or len(q) == 0:
            return (np.full((len(q), k), np.inf),
                    np.full((len(q), k), -1, dtype=np.int64))
        dists, idx = tree.query(q, k=k, distance_upper_bound=max_radius)
        dists = dists.reshape(len(q), k)
        idx = idx.reshape(len(q), k).astype(np.int64)
        idx[idx == len(pts)] = -1
        return dists, idx

    def voxel_of(self, p) -> VoxelStats | None:
        return self._voxels.get(voxel_key(p, self.resolution))

    def voxel(self, key) -> VoxelStats | None:
        return self._voxels.get(tuple(key))

    def knn(self, query, k: int, max_radius: float):
        """Exact k nearest retained points within max_radius of the query.

        Ties in distance are broken by insertion order.  Returns
        (points (m,3), normals (m,3), keys (m,3) int, distances (m,))
        sorted by ascending distance, m <= k.
        """
        q = np.asarray(query, dtype=float).reshape(3)
        res = self.resolution
        ck = voxel_key(q, res)
        max_r2 = max_radius * max_radius
        cand_pts, cand_nms, cand_keys, cand_d2, cand_seq = [], [], [], [], []
        count = 0
        kth_d2 = np.inf
        max_shell = int(np.ceil(max_radius / res)) + 1
        for s in range(max_shell + 1):
            # any voxel in shell s is at least (s-1)*res away from the query
            if s >= 1 and (s - 1) * res > max_radius:
                break
            if count >= k:
                kth = np.sqrt(kth_d2)
                if s >= 1 and kth < (s - 1) * res:
                    break
            for key in _shell_keys(ck, s):
                vp = self._points.get(key)
                if vp is None or vp.count == 0:
                    continue
                p = vp.pts[: vp.count]
                d = p - q
                d2 = np.einsum("ij,ij->i", d, d)
                keep = d2 <= max_r2
                if not np.any(keep):
                    continue
                cand_pts.append(p[keep])
                cand_nms.append(vp.normals[: vp.count][keep])
                cand_d2.append(d2[keep])
                cand_seq.append(vp.seqs[: vp.count][keep])
                cand_keys.append(np.repeat([key], int(keep.sum()), axis=0))
                count += int(keep.sum())
            if count >= k:
                all_d2 = np.concatenate(cand_d2)
                kth_d2 = np.partition(all_d2, k - 1)[k - 1]
        if count == 0:
            return (np.empty((0, 3)), np.empty((0, 3)),
                    np.empty((0, 3), dtype=np.int64), np.empty(0))
        pts = np.concatenate(cand_pts)
        nms = np.concatenate(cand_nms)
        keys = np.concatenate(cand_keys)
        d2 = np.concatenate(cand_d2)
        seq = np.concatenate(cand_seq)
        order = np.lexsort((seq, d2))[:k]
        return pts[order], nms[order], keys[order], np.sqrt(d2[order])

    def retained_points(self):
        """All retained points and their normals as ((N, 3), (N, 3)) arrays."""
        if not self._points:
            return np.empty((0, 3)), np.empty((0, 3))
        pts = [vp.pts[:vp.count] for vp in self._points.values()]
        nms = [vp.normals[:vp.count] for vp in self._points.values()]
        return np.concatenate(pts), np.concatenate(nms)

    def surfel_count(self) -> int:
        """How many voxels currently classify as surfels."""
        return sum(1 for vs in self._voxels.values()
                   if vs.classify(self.thresholds) is not None)

    def export_ascii(self, path) -> int:
        """Write retained points as "x y z nx ny nz" lines; returns the count."""
        written = 0
        with open(path, "w") as fh:
            for key in self._points:
                vp = self._points[key]
                for i in range(vp.count):
                    x, y, z = vp.pts[i]
                    nx, ny, nz = vp.normals[i]
                    fh.write(f"{x:.9g} {y:.9g} {z:.9g} {nx:.9g} {ny:.9g} {nz:.9g}\n")
                    written += 1
        return written


def _shell_keys(center, s: int):
    """Voxel keys at Chebyshev distance exactly s from center."""
    cx, cy, cz = center
    if s == 0:
        yield center
        return
    rng = range(-s, s + 1)
    for dx in (-s, s):
        for dy in rng:
            for dz in rng:
                yield (cx + dx, cy + dy, cz + dz)
    inner = range(-s + 1, s)
    for dx in inner:
        for dy in (-s, s):
            for dz in rng:
                yield (cx + dx, cy + dy, cz + dz)
        for dy in inner:
            for dz in (-s, s):
                yield (cx + dx, cy + dy, cz + dz)
