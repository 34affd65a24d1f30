"""Grid containers, ego-frame geometry and Dempster-Shafer mass algebra.

Conventions shared by every module:

* arrays are indexed ``[row, col]`` with shape ``(height, width)``;
* row 0 holds the most negative y, column 0 the most negative x;
* the ego vehicle sits at cell ``(height // 2, width // 2)``, heading 0 = +x.

Evidential grids store the two channels ``m({O})`` and ``m({F})`` in the last
axis; ``m({O,F})`` is always the residual to unity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from enum import IntEnum
from typing import Optional, Tuple

import numpy as np

from .errors import DimensionMismatch, TotalConflict

MASS_TOL = 1e-9
CONFLICT_TOL = 1e-12


@dataclass(frozen=True)
class GridConfig:
    width: int = 128
    height: int = 128
    resolution: float = 0.33

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("grid width and height must be >= 1")
        if not self.resolution > 0:
            raise ValueError("grid resolution must be > 0")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "resolution", float(self.resolution))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def center(self) -> Tuple[int, int]:
        """Cell index of the ego vehicle."""
        return (self.height // 2, self.width // 2)

    @property
    def half_extent(self) -> Tuple[float, float]:
        """Half of the covered area in meters, as (x, y)."""
        return (self.width * self.resolution / 2.0, self.height * self.resolution / 2.0)

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Ego-frame (x, y) of every cell center, each shaped like the grid (read-only)."""
        return _cell_centers(self)


@lru_cache(maxsize=16)
def _cell_centers(config: GridConfig) -> Tuple[np.ndarray, np.ndarray]:
    hx, hy = config.half_extent
    xs = (np.arange(config.width) + 0.5) * config.resolution - hx
    ys = (np.arange(config.height) + 0.5) * config.resolution - hy
    x, y = np.meshgrid(xs, ys)
    x.flags.writeable = False
    y.flags.writeable = False
    return x, y


class CellClass(IntEnum):
    # values double as the EGRD on-disk codes
    FREE = 0
    OCCUPIED = 1
    OCCLUDED = 2


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(a, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose2:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))

    def compose(self, other: "Pose2") -> "Pose2":
        """``self ∘ other``: express ``other`` (given in this frame) in the parent frame."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose2(self.x + c * other.x - s * other.y,
                     self.y + s * other.x + c * other.y,
                     self.heading + other.heading)

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.heading), math.sin(self.heading)
        return Pose2(-(c * self.x + s * self.y), s * self.x - c * self.y, -self.heading)

    def transform_points(self, xy: np.ndarray) -> np.ndarray:
        """Map (N, 2) points from this pose's local frame to the parent frame."""
        xy = np.asarray(xy, dtype=float)
        c, s = math.cos(self.heading), math.sin(self.heading)
        out = np.empty_like(xy)
        out[..., 0] = c * xy[..., 0] - s * xy[..., 1] + self.x
        out[..., 1] = s * xy[..., 0] + c * xy[..., 1] + self.y
        return out

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.heading)


def relative_pose(from_pose: Pose2, to_pose: Pose2) -> Pose2:
    """Pose of ``to_pose`` expressed in the frame of ``from_pose``."""
    dx, dy = to_pose.x - from_pose.x, to_pose.y - from_pose.y
    c, s = math.cos(from_pose.heading), math.sin(from_pose.heading)
    return Pose2(c * dx + s * dy, -s * dx + c * dy, to_pose.heading - from_pose.heading)


# ---------------------------------------------------------------------------
# belief masses


@dataclass(frozen=True)
class BeliefMass:
    """Masses over {O}, {F} and {O,F} for a single cell."""

    m_o: float
    m_f: float
    m_u: float

    def __post_init__(self):
        vals = (float(self.m_o), float(self.m_f), float(self.m_u))
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite belief mass {vals}")
        if any(v < -MASS_TOL or v > 1.0 + MASS_TOL for v in vals):
            raise ValueError(f"belief mass component outside [0, 1]: {vals}")
        if abs(sum(vals) - 1.0) > MASS_TOL:
            raise ValueError(f"belief masses must sum to 1, got {sum(vals)!r}")
        for name, v in zip(("m_o", "m_f", "m_u"), vals):
            object.__setattr__(self, name, min(1.0, max(0.0, v)))

    @classmethod
    def from_channels(cls, m_o: float, m_f: float) -> "BeliefMass":
        return cls(m_o, m_f, 1.0 - m_o - m_f)

    @classmethod
    def vacuous(cls) -> "BeliefMass":
        return cls(0.0, 0.0, 1.0)

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.m_o, self.m_f, self.m_u)


VACUOUS = BeliefMass(0.0, 0.0, 1.0)


def combine_masses(a: BeliefMass, b: BeliefMass) -> BeliefMass:
    """Dempster's rule of combination on the frame {O, F}.

    Raises TotalConflict when the conflict ``K`` reaches 1.
    """
    k = a.m_o * b.m_f + a.m_f * b.m_o
    norm = 1.0 - k
    if norm <= CONFLICT_TOL:
        raise TotalConflict(f"total conflict combining {a.as_tuple()} and {b.as_tuple()}")
    m_o = (a.m_o * b.m_o + (a.m_o * b.m_u + a.m_u * b.m_o)) / norm
    m_f = (a.m_f * b.m_f + (a.m_f * b.m_u + a.m_u * b.m_f)) / norm
    m_u = (a.m_u * b.m_u) / norm
    return BeliefMass(m_o, m_f, m_u)


def discount_mass(m: BeliefMass, gamma: float) -> BeliefMass:
    """Shift ``1 - gamma`` of the committed mass onto ignorance."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"discount factor must lie in [0, 1], got {gamma}")
    m_o, m_f = gamma * m.m_o, gamma * m.m_f
    return BeliefMass(m_o, m_f, 1.0 - (m_o + m_f))


def pignistic(m: BeliefMass) -> float:
    # m_o + m_u/2, written so that m_o == m_f gives exactly 0.5
    return 0.5 + 0.5 * (m.m_o - m.m_f)


def classify_mass(m: BeliefMass) -> CellClass:
    """Largest component wins; ties resolve Occluded > Occupied > Free."""
    best = max(m.m_o, m.m_f, m.m_u)
    if m.m_u == best:
        return CellClass.OCCLUDED
    if m.m_o == best:
        return CellClass.OCCUPIED
    return CellClass.FREE


# vectorised forms over (..., 2) channel arrays


def mass_residual(m: np.ndarray) -> np.ndarray:
    return 1.0 - m[..., 0] - m[..., 1]


def combine_arrays(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Cellwise Dempster combination.

    Returns ``(combined, conflict)`` where ``conflict`` flags cells with K = 1;
    the combined value in those cells is undefined and left for the caller.
    """
    a_o, a_f = a[..., 0], a[..., 1]
    b_o, b_f = b[..., 0], b[..., 1]
    a_u, b_u = 1.0 - a_o - a_f, 1.0 - b_o - b_f
    norm = 1.0 - (a_o * b_f + a_f * b_o)
    conflict = norm <= CONFLICT_TOL
    safe = np.where(conflict, 1.0, norm)
    out = np.empty(np.broadcast(a_o, b_o).shape + (2,))
    out[..., 0] = (a_o * b_o + (a_o * b_u + a_u * b_o)) / safe
    out[..., 1] = (a_f * b_f + (a_f * b_u + a_u * b_f)) / safe
    return out, conflict


def discount_arrays(m: np.ndarray, gamma: float) -> np.ndarray:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"discount factor must lie in [0, 1], got {gamma}")
    return m * gamma


def pignistic_arrays(m: np.ndarray) -> np.ndarray:
    return 0.5 + 0.5 * (m[..., 0] - m[..., 1])


def classify_arrays(m: np.ndarray) -> np.ndarray:
    """Vectorised :func:`classify_mass`, returning uint8 CellClass codes."""
    m_o, m_f = m[..., 0], m[..., 1]
    m_u = 1.0 - m_o - m_f
    out = np.full(m_o.shape, CellClass.FREE, dtype=np.uint8)
    out[(m_o >= m_f)] = CellClass.OCCUPIED
    best = np.maximum(np.maximum(m_o, m_f), m_u)
    out[m_u >= best] = CellClass.OCCLUDED
    return out


# ---------------------------------------------------------------------------
# grid containers


def _frozen(arr, dtype, shape, what):
    a = np.array(arr, dtype=dtype, copy=True)
    if a.shape != shape:
        raise DimensionMismatch(f"{what} cells have shape {a.shape}, expected {shape}")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class _Grid:
    config: GridConfig
    cells: np.ndarray
    pose: Pose2 = field(default_factory=Pose2)
    timestamp: float = 0.0

    def same_grid(self, other: "_Grid") -> bool:
        return self.config == other.config

    def __eq__(self, other):
        return (type(self) is type(other) and self.config == other.config
                and self.pose == other.pose and self.timestamp == other.timestamp
                and np.array_equal(self.cells, other.cells))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Sgm(_Grid):
    """Per-cell CellClass codes observed by one scan."""

    def __post_init__(self):
        cells = _frozen(self.cells, np.uint8, self.config.shape, "SGM")
        if cells.size and cells.max() > CellClass.OCCLUDED:
            raise ValueError("SGM cells must be CellClass codes 0..2")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def occluded(cls, config, pose=None, timestamp=0.0):
        return cls(config, np.full(config.shape, CellClass.OCCLUDED, np.uint8),
                   pose or Pose2(), timestamp)


def _binary(self, what):
    cells = _frozen(self.cells, np.uint8, self.config.shape, what)
    if cells.size and cells.max() > 1:
        raise ValueError(f"{what} cells must be 0 or 1")
    object.__setattr__(self, "cells", cells)


@dataclass(frozen=True, eq=False)
class Rgm(_Grid):
    """1 where the known class changed between two ego-aligned SGMs."""

    def __post_init__(self):
        _binary(self, "RGM")


@dataclass(frozen=True, eq=False)
class DynamicMask(_Grid):
    """1 on cells that belong to moving objects."""

    def __post_init__(self):
        _binary(self, "dynamic mask")

    @classmethod
    def zeros(cls, config, pose=None, timestamp=0.0):
        return cls(config, np.zeros(config.shape, np.uint8), pose or Pose2(), timestamp)


@dataclass(frozen=True, eq=False)
class Ogm(_Grid):
    """Occupancy probabilities."""

    def __post_init__(self):
        cells = _frozen(self.cells, np.float64, self.config.shape, "OGM")
        if cells.size and (not np.all(np.isfinite(cells)) or cells.min() < 0.0 or cells.max() > 1.0):
            raise ValueError("OGM probabilities must lie in [0, 1]")
        object.__setattr__(self, "cells", cells)


@dataclass(frozen=True, eq=False)
class Eogm(_Grid):
    """Evidential grid; ``cells[..., 0]`` is m({O}), ``cells[..., 1]`` is m({F})."""

    def __post_init__(self):
        cells = _frozen(self.cells, np.float64, self.config.shape + (2,), "eOGM")
        if cells.size:
            u = 1.0 - cells[..., 0] - cells[..., 1]
            if (not np.all(np.isfinite(cells)) or cells.min() < -MASS_TOL
                    or cells.max() > 1.0 + MASS_TOL or u.min() < -MASS_TOL):
                raise ValueError("eOGM cells violate belief-mass bounds")
        object.__setattr__(self, "cells", cells)

    @classmethod
    def vacuous(cls, config, pose=None, timestamp=0.0):
        return cls(config, np.zeros(config.shape + (2,)), pose or Pose2(), timestamp)

    @classmethod
    def trusted(cls, config, cells: np.ndarray, pose, timestamp) -> "Eogm":
        """Wrap masses known to be valid (fresh float64 array of the right shape) unchecked."""
        g = object.__new__(cls)
        cells.flags.writeable = False
        for k, v in (("config", config), ("cells", cells), ("pose", pose), ("timestamp", timestamp)):
            object.__setattr__(g, k, v)
        return g

    @property
    def m_o(self) -> np.ndarray:
        return self.cells[..., 0]

    @property
    def m_f(self) -> np.ndarray:
        return self.cells[..., 1]

    @property
    def m_u(self) -> np.ndarray:
        return mass_residual(self.cells)

    def at(self, row: int, col: int) -> BeliefMass:
        o, f = self.cells[row, col]
        return BeliefMass.from_channels(float(o), float(f))

    def to_ogm(self) -> Ogm:
        return Ogm(self.config, np.clip(pignistic_arrays(self.cells), 0.0, 1.0),
                   self.pose, self.timestamp)

    def classes(self) -> np.ndarray:
        return classify_arrays(self.cells)


def check_same_grid(*grids):
    first = grids[0].config
    for g in grids[1:]:
        if g.config != first:
            raise DimensionMismatch(f"grid configs differ: {first} vs {g.config}")


# ---------------------------------------------------------------------------
# coordinates and resampling


def world_to_cell(point, config: GridConfig) -> Optional[Tuple[int, int]]:
    """Cell (row, col) containing an ego-frame point, or None outside the window."""
    x, y = float(point[0]), float(point[1])
    hx, hy = config.half_extent
    col = math.floor((x + hx) / config.resolution)
    row = math.floor((y + hy) / config.resolution)
    if 0 <= row < config.height and 0 <= col < config.width:
        return (row, col)
    return None


def points_to_cells(xy: np.ndarray, config: GridConfig):
    """Vectorised :func:`world_to_cell`; returns (rows, cols, inside)."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    hx, hy = config.half_extent
    cols = np.floor((xy[:, 0] + hx) / config.resolution).astype(np.int64)
    rows = np.floor((xy[:, 1] + hy) / config.resolution).astype(np.int64)
    inside = (rows >= 0) & (rows < config.height) & (cols >= 0) & (cols < config.width)
    return rows, cols, inside


def warp_indices(config: GridConfig, from_pose: Pose2, to_pose: Pose2):
    """Source lookup for resampling a grid captured at ``from_pose`` into ``to_pose``.

    Returns ``(flat_index, valid)``: for each destination cell, the flat index of
    the nearest source cell and whether that cell lies inside the source window.
    Both arrays are read-only and shared between calls with the same geometry.
    """
    rel = relative_pose(from_pose, to_pose)
    return _warp_lookup(config, rel.x, rel.y, rel.heading)


@lru_cache(maxsize=64)
def _warp_lookup(config: GridConfig, rx: float, ry: float, rh: float):
    rel = Pose2(rx, ry, rh)
    x, y = config.cell_centers()
    c, s = math.cos(rel.heading), math.sin(rel.heading)
    sx = c * x - s * y + rel.x
    sy = s * x + c * y + rel.y
    hx, hy = config.half_extent
    cols = np.floor((sx + hx) / config.resolution).astype(np.int64)
    rows = np.floor((sy + hy) / config.resolution).astype(np.int64)
    valid = (rows >= 0) & (rows < config.height) & (cols >= 0) & (cols < config.width)
    flat = np.where(valid, rows * config.width + cols, 0)
    flat.flags.writeable = False
    valid.flags.writeable = False
    return flat, valid


def warp_gather_index(config: GridConfig, from_pose: Pose2, to_pose: Pose2) -> np.ndarray:
    """Like :func:`warp_indices`, with out-of-window cells pointing one past the last cell."""
    rel = relative_pose(from_pose, to_pose)
    return _gather_lookup(config, rel.x, rel.y, rel.heading)


@lru_cache(maxsize=64)
def _gather_lookup(config: GridConfig, rx: float, ry: float, rh: float) -> np.ndarray:
    flat, valid = _warp_lookup(config, rx, ry, rh)
    idx = np.where(valid, flat, config.width * config.height).ravel()
    idx.flags.writeable = False
    return idx


def warp_masses(cells: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Resample (H, W, 2) masses with a :func:`warp_gather_index`; outside cells become vacuous."""
    n = cells.shape[0] * cells.shape[1]
    src = np.empty(n + 1, np.complex128)
    # each (m_o, m_f) pair moves as one 16-byte item
    src[:n] = np.ascontiguousarray(cells, dtype=np.float64).reshape(-1, 2).view(np.complex128)[:, 0]
    src[n] = 0.0
    return src.take(idx).view(np.float64).reshape(cells.shape)


def warp_array(arr: np.ndarray, config: GridConfig, from_pose: Pose2, to_pose: Pose2, fill):
    """Nearest-neighbour resampling of a (H, W, ...) array between ego frames."""
    flat, valid = warp_indices(config, from_pose, to_pose)
    src = np.asarray(arr).reshape((config.height * config.width,) + np.asarray(arr).shape[2:])
    out = src[flat]
    out[~valid] = fill
    return out


def transform_grid(src: Sgm, from_pose: Pose2, to_pose: Pose2) -> Sgm:
    """Resample an SGM into another ego frame; cells seen from nowhere become Occluded."""
    cells = warp_array(src.cells, src.config, from_pose, to_pose, CellClass.OCCLUDED)
    return Sgm(src.config, cells, to_pose, src.timestamp)


def transform_eogm(src: Eogm, to_pose: Pose2) -> Eogm:
    cells = warp_masses(src.cells, warp_gather_index(src.config, src.pose, to_pose))
    return Eogm.trusted(src.config, cells, to_pose, src.timestamp)


def transform_mask(src: DynamicMask, to_pose: Pose2) -> DynamicMask:
    cells = warp_array(src.cells, src.config, src.pose, to_pose, 0)
    return DynamicMask(src.config, cells, to_pose, src.timestamp)
