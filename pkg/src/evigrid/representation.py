"""Point clouds to sensor grids (SGM), residual grids (RGM) and evidential grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .grid import (
    CellClass,
    DynamicMask,
    Eogm,
    GridConfig,
    Pose2,
    Rgm,
    Sgm,
    check_same_grid,
    combine_arrays,
    transform_eogm,
    transform_grid,
)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Returns in the ego frame, shape (N, 3), captured at ``ego_pose``."""

    points: np.ndarray
    timestamp: float = 0.0
    ego_pose: Pose2 = field(default_factory=Pose2)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return (isinstance(other, PointCloud) and self.timestamp == other.timestamp
                and self.ego_pose == other.ego_pose
                and np.array_equal(self.points, other.points))

    __hash__ = None


@dataclass(frozen=True)
class MeasurementModel:
    alpha_occ: float = 0.9
    alpha_free: float = 0.7

    def __post_init__(self):
        if not (0.0 < self.alpha_occ < 1.0 and 0.0 < self.alpha_free < 1.0):
            raise ValueError("measurement masses must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class RepresentationConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    rgm_offset: int = 5
    frame_dt: float = 0.1
    ground_z_threshold: float = 0.2
    measurement: MeasurementModel = field(default_factory=MeasurementModel)
    # share of the warped prior kept before each evidential update
    prior_discount: float = 0.6

    def __post_init__(self):
        if self.rgm_offset < 1:
            raise ValueError("rgm_offset must be >= 1")
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be > 0")
        if not 0.0 <= self.prior_discount <= 1.0:
            raise ValueError("prior_discount must lie in [0, 1]")


def remove_ground(cloud: PointCloud, z_threshold: float) -> PointCloud:
    keep = cloud.points[:, 2] > z_threshold
    return PointCloud(cloud.points[keep], cloud.timestamp, cloud.ego_pose)


# ---------------------------------------------------------------------------
# ray traversal


def raytrace_cells(origin: Tuple[int, int], target: Tuple[int, int],
                   config: GridConfig) -> List[Tuple[int, int]]:
    """Cells crossed by the segment joining two cell centers, endpoints excluded.

    The walk steps into whichever neighbour the segment enters first. A segment
    passing exactly through a cell corner steps diagonally and touches neither
    side cell. Integer arithmetic only, so the result is exact.
    """
    (r0, c0), (r1, c1) = origin, target
    for r, c in (origin, target):
        if not (0 <= r < config.height and 0 <= c < config.width):
            raise ValueError(f"cell {(r, c)} outside the {config.height}x{config.width} grid")
    dx, dy = c1 - c0, r1 - r0
    nx, ny = abs(dx), abs(dy)
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    r, c, ix, iy = r0, c0, 0, 0
    out = []
    while ix < nx or iy < ny:
        # compare the parameters (ix + 1/2) / nx and (iy + 1/2) / ny of the next crossings
        d = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx
        if d == 0:
            c += sx
            r += sy
            ix += 1
            iy += 1
        elif d < 0:
            c += sx
            ix += 1
        else:
            r += sy
            iy += 1
        out.append((r, c))
    return out[:-1]


@dataclass(frozen=True)
class RayTable:
    """Rays from the ego cell to every cell, in CSR layout over flat cell ids."""

    offsets: np.ndarray
    cells: np.ndarray


@lru_cache(maxsize=8)
def ray_table(config: GridConfig) -> RayTable:
    """Vectorised :func:`raytrace_cells` from the ego cell to every grid cell."""
    h, w = config.shape
    r0, c0 = config.center
    n = h * w
    tr, tc = np.divmod(np.arange(n), w)
    nx, ny = np.abs(tc - c0), np.abs(tr - r0)
    sx = np.where(tc > c0, 1, -1)
    sy = np.where(tr > r0, 1, -1)
    r = np.full(n, r0)
    c = np.full(n, c0)
    ix = np.zeros(n, np.int64)
    iy = np.zeros(n, np.int64)
    owners, steps, flats = [], [], []
    step = 0
    active = np.nonzero((nx > 0) | (ny > 0))[0]
    while active.size:
        a_ix, a_iy, a_nx, a_ny = ix[active], iy[active], nx[active], ny[active]
        d = (1 + 2 * a_ix) * a_ny - (1 + 2 * a_iy) * a_nx
        mx = d <= 0
        my = d >= 0
        c[active] += np.where(mx, sx[active], 0)
        ix[active] += mx
        r[active] += np.where(my, sy[active], 0)
        iy[active] += my
        done = (ix[active] >= a_nx) & (iy[active] >= a_ny)
        # the target itself is the final step; keep only interior cells
        keep = active[~done]
        owners.append(keep)
        steps.append(np.full(keep.size, step))
        flats.append(r[keep] * w + c[keep])
        active = keep
        step += 1
    owner = np.concatenate(owners) if owners else np.zeros(0, np.int64)
    order = np.lexsort((np.concatenate(steps) if steps else owner, owner))
    cells = (np.concatenate(flats) if flats else owner)[order]
    counts = np.bincount(owner, minlength=n)
    offsets = np.zeros(n + 1, np.int64)
    np.cumsum(counts, out=offsets[1:])
    cells.flags.writeable = False
    offsets.flags.writeable = False
    return RayTable(offsets, cells.astype(np.int64))


def _gather_segments(table: RayTable, targets: np.ndarray, include_target: np.ndarray):
    """Concatenate rays to ``targets``; returns (cells, segment_id) in walk order."""
    starts = table.offsets[targets]
    lengths = table.offsets[targets + 1] - starts
    total = int(lengths.sum())
    seg = np.repeat(np.arange(targets.size), lengths)
    first = np.cumsum(lengths) - lengths
    cells = table.cells[np.repeat(starts - first, lengths) + np.arange(total)]
    if include_target.any():
        extra = np.nonzero(include_target)[0]
        # append the target after the last interior cell of its own segment
        pos = np.concatenate([np.arange(total), first[extra] + lengths[extra] - 0.5])
        cells = np.concatenate([cells, targets[extra]])[np.argsort(pos, kind="stable")]
        seg = np.concatenate([seg, extra])[np.argsort(pos, kind="stable")]
    return cells, seg


def _exit_cells(xy: np.ndarray, config: GridConfig) -> np.ndarray:
    """Flat id of the last in-grid cell on the ray from the ego cell toward each point."""
    h, w = config.shape
    res = config.resolution
    hx, hy = config.half_extent
    r0, c0 = config.center
    ox, oy = (c0 + 0.5) * res - hx, (r0 + 0.5) * res - hy
    dx, dy = xy[:, 0] - ox, xy[:, 1] - oy
    with np.errstate(divide="ignore", invalid="ignore"):
        tx = np.where(dx > 0, (hx - ox) / dx, np.where(dx < 0, (-hx - ox) / dx, np.inf))
        ty = np.where(dy > 0, (hy - oy) / dy, np.where(dy < 0, (-hy - oy) / dy, np.inf))
    t = np.minimum(np.minimum(tx, ty), 1.0)
    ex, ey = ox + t * dx, oy + t * dy
    cols = np.clip(np.floor((ex + hx) / res), 0, w - 1).astype(np.int64)
    rows = np.clip(np.floor((ey + hy) / res), 0, h - 1).astype(np.int64)
    return rows * w + cols


def build_sgm(cloud: PointCloud, config: RepresentationConfig) -> Sgm:
    """Ray-trace one ground-filtered cloud into a sensor grid.

    Returns mark their cell Occupied. Every beam clears the cells between the
    ego cell and its return, stopping at the first Occupied cell it meets, so
    the result does not depend on point order. Returns beyond the window clear
    the in-grid part of their ray up to the boundary cell.
    """
    grid = config.grid
    h, w = grid.shape
    n = h * w
    xy = cloud.points[:, :2]
    hx, hy = grid.half_extent
    cols = np.floor((xy[:, 0] + hx) / grid.resolution)
    rows = np.floor((xy[:, 1] + hy) / grid.resolution)
    inside = (rows >= 0) & (rows < h) & (cols >= 0) & (cols < w)

    occupied = np.zeros(n, bool)
    hit_ids = (rows[inside] * w + cols[inside]).astype(np.int64)
    occupied[hit_ids] = True

    hit_targets = np.unique(hit_ids)
    out_targets = np.unique(_exit_cells(xy[~inside], grid)) if (~inside).any() else hit_targets[:0]
    out_targets = np.setdiff1d(out_targets, hit_targets)
    targets = np.concatenate([hit_targets, out_targets])
    include = np.concatenate([np.zeros(hit_targets.size, bool), np.ones(out_targets.size, bool)])

    free = np.zeros(n, bool)
    if targets.size:
        cells, seg = _gather_segments(ray_table(grid), targets, include)
        blocked = np.cumsum(occupied[cells])
        seg_start = np.searchsorted(seg, np.arange(targets.size))
        base = np.concatenate([[0], blocked])[seg_start]
        open_cells = (blocked - base[seg]) == 0
        free[cells[open_cells]] = True

    out = np.full(n, CellClass.OCCLUDED, np.uint8)
    out[free] = CellClass.FREE
    out[occupied] = CellClass.OCCUPIED
    return Sgm(grid, out.reshape(h, w), cloud.ego_pose, cloud.timestamp)


# ---------------------------------------------------------------------------
# residuals and evidence


def build_rgm(current: Sgm, past: Sgm) -> Rgm:
    """Mark cells that swapped between Free and Occupied; Occluded never counts.

    ``past`` must already be expressed in ``current``'s ego frame.
    """
    check_same_grid(current, past)
    a, b = current.cells, past.cells
    changed = ((a == CellClass.FREE) & (b == CellClass.OCCUPIED)) | (
        (a == CellClass.OCCUPIED) & (b == CellClass.FREE))
    return Rgm(current.config, changed.astype(np.uint8), current.pose, current.timestamp)


def residual_map(current: Sgm, past: Sgm) -> Rgm:
    """Ego-compensate ``past`` into ``current``'s frame, then build the RGM."""
    return build_rgm(current, transform_grid(past, past.pose, current.pose))


def sgm_to_measurement(sgm: Sgm, model: MeasurementModel) -> Eogm:
    m = np.zeros(sgm.config.shape + (2,))
    m[sgm.cells == CellClass.OCCUPIED, 0] = model.alpha_occ
    m[sgm.cells == CellClass.FREE, 1] = model.alpha_free
    return Eogm(sgm.config, m, sgm.pose, sgm.timestamp)


def update_eogm(prior: Eogm, measurement: Eogm) -> Eogm:
    """Cellwise Dempster update; totally conflicting cells take the measurement."""
    check_same_grid(prior, measurement)
    fused, conflict = combine_arrays(prior.cells, measurement.cells)
    if conflict.any():
        fused[conflict] = measurement.cells[conflict]
    return Eogm(measurement.config, fused, measurement.pose, measurement.timestamp)


def accumulate_eogm(prior: Optional[Eogm], sgm: Sgm, config: RepresentationConfig) -> Eogm:
    """One step of the per-frame evidential filter.

    The prior is warped into the new ego frame, discounted by
    ``config.prior_discount`` so that stale evidence can be overturned, and
    fused with the inverse-sensor-model measurement of ``sgm``.
    """
    meas = sgm_to_measurement(sgm, config.measurement)
    if prior is None:
        return meas
    warped = transform_eogm(prior, sgm.pose)
    kept = Eogm(warped.config, warped.cells * config.prior_discount, warped.pose, warped.timestamp)
    return update_eogm(kept, meas)


def split_by_mask(grid: Eogm, mask: DynamicMask) -> Tuple[Eogm, Eogm]:
    """(static, dynamic) parts; each side is vacuous where the other keeps the mass."""
    check_same_grid(grid, mask)
    m = mask.cells.astype(np.float64)[..., None]
    dynamic = grid.cells * m
    static = grid.cells * (1.0 - m)
    return (Eogm(grid.config, static, grid.pose, grid.timestamp),
            Eogm(grid.config, dynamic, grid.pose, grid.timestamp))


@dataclass
class SequenceRepr:
    """Per-frame representations of one sequence."""

    sgms: List[Sgm]
    rgms: List[Rgm]
    eogms: List[Eogm]
    rgm_past: List[int]  # index of the frame each RGM was compared against

    def flagged(self, offset: int) -> List[bool]:
        return [i - p != offset for i, p in enumerate(self.rgm_past)]


def represent_sequence(clouds: Sequence[PointCloud], config: RepresentationConfig) -> SequenceRepr:
    """SGM, RGM and eOGM for every frame of a sequence.

    Frames earlier than ``rgm_offset`` are compared against frame 0.
    """
    sgms, rgms, eogms, past = [], [], [], []
    prior = None
    for i, cloud in enumerate(clouds):
        sgm = build_sgm(remove_ground(cloud, config.ground_z_threshold), config)
        j = max(0, i - config.rgm_offset)
        rgms.append(residual_map(sgm, sgms[j] if j < i else sgm))
        sgms.append(sgm)
        past.append(j)
        prior = accumulate_eogm(prior, sgm, config)
        eogms.append(prior)
    return SequenceRepr(sgms, rgms, eogms, past)

