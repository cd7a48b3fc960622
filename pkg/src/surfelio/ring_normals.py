"""Dense per-point normals from the ring range image.

The estimator solves, per image cell, the small least-squares problem

    minimize over n:  sum over the window of (v.n - 1/r)^2

where v are the unit bearings of the window cells and r their measured
ranges.  Because the bearings are a fixed property of the sensor, the
3x3 normal matrix of that problem can be inverted once per cell and
reused for every scan; a new scan only contributes the right-hand side,
which is a box filter over the inverse-range image.  The solve itself is
then a single 3x3 multiply per cell.

All window sums use summed-area tables with clipped rows (top/bottom
rings do not wrap) and wrapped columns (azimuth is periodic), so the
cost per cell is independent of the window size.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateScanError, ScanValidationError
from .scan import RingScan

_TINY = 1e-12


def _window_sum(values: np.ndarray, half: int) -> np.ndarray:
    """Sliding (2*half+1)^2 window sum over a ring image.

    Rows clip at the image border, columns wrap around.  `values` is
    (R, C) or (R, C, K); entries outside the occupancy mask must already
    be zeroed by the caller.
    """
    rows, cols = values.shape[:2]
    h = half
    padded = np.concatenate([values[:, cols - h:], values, values[:, :h]], axis=1)
    cs = padded.cumsum(axis=0).cumsum(axis=1)
    zrow = np.zeros((1,) + cs.shape[1:], dtype=cs.dtype)
    cs = np.concatenate([zrow, cs], axis=0)
    zcol = np.zeros((cs.shape[0], 1) + cs.shape[2:], dtype=cs.dtype)
    cs = np.concatenate([zcol, cs], axis=1)
    r0 = np.clip(np.arange(rows) - h, 0, rows)
    r1 = np.clip(np.arange(rows) + h + 1, 0, rows)
    ci = np.arange(cols)
    # inclusion-exclusion on the padded integral image; +h re-centers columns
    top, bot = cs[r0], cs[r1]
    return (bot[:, ci + 2 * h + 1] - bot[:, ci]
            - top[:, ci + 2 * h + 1] + top[:, ci])


@dataclass(frozen=True)
class StructureTable:
    """Per-cell bearing directions and pre-inverted window moment matrices.

    Valid for one fixed sensor geometry; immutable once built.
    """

    bearings: np.ndarray       # (R, C, 3), NaN where never observed
    observed: np.ndarray       # (R, C) bool, bearing known
    valid: np.ndarray          # (R, C) bool, solvable cells
    minv: np.ndarray           # (R, C, 3, 3), garbage outside `valid`
    support_count: np.ndarray  # (R, C) int, observed cells in each window
    window: int

    @property
    def rows(self) -> int:
        return self.bearings.shape[0]

    @property
    def cols(self) -> int:
        return self.bearings.shape[1]


@dataclass
class RangeImage:
    """Inverse ranges of one scan on the (ring, azimuth column) grid."""

    inv_range: np.ndarray     # (R, C) float, 0 where empty
    occupied: np.ndarray      # (R, C) bool
    source_index: np.ndarray  # (R, C) int32, winning point index or -1


@dataclass
class NormalImage:
    """Unit normals on the ring grid; NaN vectors where invalid."""

    normals: np.ndarray  # (R, C, 3)
    valid: np.ndarray    # (R, C) bool


class TableBuilder:
    """Accumulates bearing observations over several scans, first write wins."""

    def __init__(self, window: int = 5, cond_cap: float = 1e6):
        if window < 3 or window % 2 == 0:
            raise ValueError("window must be an odd integer >= 3")
        self.window = window
        self.cond_cap = float(cond_cap)
        self._bearings = None
        self._observed = None
        self._shape = None
        self.scan_count = 0

    def add_scan(self, scan: RingScan) -> None:
        if scan.ring_count < 1 or scan.points_per_ring < 1:
            raise DegenerateScanError("scan grid has zero rows or columns")
        shape = (scan.ring_count, scan.points_per_ring)
        if self._shape is None:
            self._shape = shape
            self._bearings = np.full(shape + (3,), np.nan)
            self._observed = np.zeros(shape, dtype=bool)
        elif shape != self._shape:
            raise ScanValidationError(
                f"scan grid {shape} does not match table grid {self._shape}")
        self.scan_count += 1
        if len(scan) == 0:
            return
        ranges = scan.ranges
        cols = np.mod(np.round(scan.azimuths / scan.h_res).astype(np.int64),
                      scan.points_per_ring)
        rows = scan.rings
        new = ~self._observed[rows, cols]
        if not np.any(new):
            return
        # among duplicates hitting the same new cell, keep the first in point order
        flat = rows[new] * self._shape[1] + cols[new]
        _, first = np.unique(flat, return_index=True)
        idx = np.flatnonzero(new)[first]
        v = scan.positions[idx] / ranges[idx][:, None]
        self._bearings[rows[idx], cols[idx]] = v
        self._observed[rows[idx], cols[idx]] = True

    def build(self) -> StructureTable:
        if self._shape is None:
            raise DegenerateScanError("no scans were provided to the table builder")
        h = self.window // 2
        observed = self._observed
        v = np.where(observed[..., None], self._bearings, 0.0)
        # windowed sum of the bearing outer products, as 9 flat components
        vv = np.einsum("rci,rcj->rcij", v, v).reshape(self._shape + (9,))
        m = _window_sum(vv, h).reshape(self._shape + (3, 3))
        support = _window_sum(observed.astype(float), h)
        support_count = np.rint(support).astype(np.int64)

        valid = observed & (support_count >= 3)
        if np.any(valid):
            mv = m[valid]
            lams = np.linalg.eigvalsh(mv)
            good = (lams[:, 0] > _TINY) & (lams[:, 2] / np.maximum(lams[:, 0], _TINY)
                                           < self.cond_cap)
            ok = np.zeros(valid.sum(), dtype=bool)
            ok[good] = True
            flat_valid = np.zeros(self._shape, dtype=bool)
            flat_valid[valid] = ok
            valid = flat_valid
        minv = np.zeros(self._shape + (3, 3))
        if np.any(valid):
            minv[valid] = np.linalg.inv(m[valid])
        return StructureTable(
            bearings=self._bearings.copy(),
            observed=observed.copy(),
            valid=valid,
            minv=minv,
            support_count=support_count,
            window=self.window,
        )


def build_structure_table(scans, window: int = 5, cond_cap: float = 1e6) -> StructureTable:
    """Build the lookup table from one or more scans of the same sensor."""
    builder = TableBuilder(window=window, cond_cap=cond_cap)
    count = 0
    for scan in scans:
        builder.add_scan(scan)
        count += 1
    if count == 0:
        raise DegenerateScanError("need at least one scan to build a structure table")
    return builder.build()


def project_scan(scan: RingScan, table: StructureTable) -> RangeImage:
    """Scatter a scan onto the table grid; collisions keep the nearer point."""
    shape = (table.rows, table.cols)
    if (scan.ring_count, scan.points_per_ring) != shape:
        raise ScanValidationError("scan grid does not match the structure table")
    inv_range = np.zeros(shape)
    occupied = np.zeros(shape, dtype=bool)
    source = np.full(shape, -1, dtype=np.int32)
    if len(scan) == 0:
        return RangeImage(inv_range, occupied, source)
    ranges = scan.ranges
    cols = np.mod(np.round(scan.azimuths / scan.h_res).astype(np.int64), table.cols)
    flat = scan.rings * table.cols + cols
    order = np.lexsort((ranges, flat))
    cells, first = np.unique(flat[order], return_index=True)
    winners = order[first]
    rr, cc = cells // table.cols, cells % table.cols
    inv_range[rr, cc] = 1.0 / ranges[winners]
    occupied[rr, cc] = True
    source[rr, cc] = winners
    return RangeImage(inv_range, occupied, source)


def estimate_normals(image: RangeImage, table: StructureTable,
                     min_occupancy: float = 0.6) -> NormalImage:
    """Solve the per-cell normal from the inverse-range box filter.

    A cell gets a normal only when it is occupied, structurally valid,
    and enough of its window is occupied that the pre-inverted moment
    matrix still describes the occupied subset: at least 3 occupied
    neighbors and at least ``min_occupancy`` of the cells that went into
    the table's window sum.
    """
    h = table.window // 2
    occ = image.occupied
    v = np.where(table.observed[..., None], table.bearings, 0.0)
    rhs = _window_sum(v * np.where(occ, image.inv_range, 0.0)[..., None], h)
    occ_count = np.rint(_window_sum(occ.astype(float), h)).astype(np.int64)

    n = np.einsum("rcij,rcj->rci", table.minv, rhs)
    norms = np.linalg.norm(n, axis=-1)
    needed = np.maximum(3, np.ceil(min_occupancy * table.support_count).astype(np.int64))
    valid = occ & table.valid & (occ_count >= needed) & (norms > _TINY)
    out = np.full(n.shape, np.nan)
    nv = n[valid] / norms[valid][:, None]
    out[valid] = nv
    return NormalImage(out, valid)


def flip_backfaced(normals: NormalImage, table: StructureTable) -> NormalImage:
    """Orient every valid normal to face the sensor (n . bearing <= 0)."""
    dots = np.einsum("rci,rci->rc", np.nan_to_num(normals.normals), table.bearings)
    flip = normals.valid & (dots > 0.0)
    out = normals.normals.copy()
    out[flip] = -out[flip]
    return NormalImage(out, normals.valid.copy())


def median_smooth(normals: NormalImage, window: int = 3) -> NormalImage:
    """Per-component median over the valid window neighbors, re-normalized.

    The validity mask is unchanged: a valid cell always has at least one
    valid neighbor (itself).  Implemented as a NaN-sentinel sort over the
    stacked neighbor slabs, which matches nanmedian but is much faster.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    h = window // 2
    rows = normals.normals.shape[0]
    slabs = []
    for dr in range(-h, h + 1):
        shifted = np.full_like(normals.normals, np.nan)
        lo, hi = max(0, -dr), rows - max(0, dr)
        shifted[lo + dr: hi + dr] = normals.normals[lo: hi]
        for dc in range(-h, h + 1):
            slabs.append(np.roll(shifted, dc, axis=1))
    stack = np.stack(slabs)
    count = np.sum(~np.isnan(stack[..., 0]), axis=0)
    stack = np.sort(stack, axis=0)  # NaNs sort to the end
    c = np.maximum(count, 1)
    lo_i = (((c - 1) // 2)[None, ..., None]).repeat(3, axis=-1)
    hi_i = ((c // 2)[None, ..., None]).repeat(3, axis=-1)
    med = 0.5 * (np.take_along_axis(stack, lo_i, axis=0)[0]
                 + np.take_along_axis(stack, hi_i, axis=0)[0])
    norms = np.linalg.norm(med, axis=-1)
    valid = normals.valid & (norms > _TINY)
    out = np.full(med.shape, np.nan)
    out[valid] = med[valid] / norms[valid][:, None]
    # cells whose median degenerated to zero length keep their input normal
    keep = normals.valid & ~valid
    out[keep] = normals.normals[keep]
    return NormalImage(out, normals.valid.copy())


def scan_normals(scan: RingScan, table: StructureTable, min_occupancy: float = 0.6,
                 smooth_window: int = 3):
    """Full per-scan normal pipeline; returns per-point normals too.

    Returns:
        (point_normals, normal_image, range_image) where point_normals is
        (N, 3) with NaN rows for points whose grid cell produced no normal.
        Every point inherits the normal of the cell it projects to.
    """
    image = project_scan(scan, table)
    est = estimate_normals(image, table, min_occupancy=min_occupancy)
    est = flip_backfaced(est, table)
    est = median_smooth(est, window=smooth_window)
    point_normals = np.full((len(scan), 3), np.nan)
    if len(scan):
        cols = np.mod(np.round(scan.azimuths / scan.h_res).astype(np.int64), table.cols)
        cell_ok = est.valid[scan.rings, cols]
        point_normals[cell_ok] = est.normals[scan.rings[cell_ok], cols[cell_ok]]
    return point_normals, est, image
