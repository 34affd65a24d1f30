"""Double-prong future occupancy prediction.

The static prong carries the static part of the current evidential grid
through the future ego poses; the dynamic prong moves each tracked moving
component at constant velocity. Both are fused per cell with Dempster's rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, LengthMismatch
from .grid import (
    DynamicMask,
    Eogm,
    Ogm,
    Pose2,
    check_same_grid,
    combine_arrays,
    relative_pose,
    warp_array,
    warp_gather_index,
    warp_masses,
)
from .representation import split_by_mask
from .segmentation import structure


@dataclass(frozen=True)
class SequenceSpec:
    past_frames: int = 5
    horizon: int = 15
    frame_dt: float = 0.1

    def __post_init__(self):
        if self.past_frames < 2:
            raise ValueError("past_frames must be >= 2")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not self.frame_dt > 0:
            raise ValueError("frame_dt must be > 0")


@dataclass(frozen=True)
class PredictorConfig:
    sequence: SequenceSpec = field(default_factory=SequenceSpec)
    gate_radius: float = 2.0
    gamma: float = 0.98
    track_offset: int = 5
    connectivity: int = 8
    # grow masks by this many cells before grouping them into objects
    cluster_gap: int = 1
    # "centroid": nearest-centroid matching of masks at T and T - offset;
    # "template": shift each component back in time onto the earlier eOGM
    velocity_mode: str = "template"
    max_speed: float = 12.0  # m/s, bounds the template search
    min_match: float = 0.3  # mean m({O}) a template shift needs to count

    def __post_init__(self):
        if not self.gate_radius > 0:
            raise ValueError("gate_radius must be > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.track_offset < 1:
            raise ValueError("track_offset must be >= 1")
        if self.cluster_gap < 0:
            raise ValueError("cluster_gap must be >= 0")
        if self.velocity_mode not in ("centroid", "template"):
            raise ValueError(f"unknown velocity_mode {self.velocity_mode!r}")
        if not self.max_speed > 0:
            raise ValueError("max_speed must be > 0")
        structure(self.connectivity)


@dataclass(frozen=True, eq=False)
class Track:
    id: int
    cells: np.ndarray  # (N, 2) member (row, col)
    centroid: Tuple[float, float]  # (row, col)
    velocity: Tuple[float, float] = (0.0, 0.0)  # (vx, vy) m/s in the ego frame

    def __post_init__(self):
        if len(self.cells) == 0:
            raise ValueError("a track needs at least one cell")


def connected_components(mask: DynamicMask, connectivity: int = 8, gap: int = 0) -> List[np.ndarray]:
    """Maximal connected groups of mask cells, as (N, 2) arrays of (row, col).

    With ``gap > 0`` the mask is first grown by ``gap`` cells, so cells up to
    ``2 * gap`` unmasked cells apart still join and a sparsely seen object stays in one piece. Groups come out
    ordered by their smallest (row, col) member, and the cells of each group
    in raster order.
    """
    on = mask.cells.astype(bool)
    st = structure(connectivity)
    grown = ndimage.binary_dilation(on, st, iterations=gap) if gap > 0 and on.any() else on
    labels, n = ndimage.label(grown, structure=st)
    labels = np.where(on, labels, 0)
    if n == 0:
        return []
    flat = labels.ravel()
    idx = np.nonzero(flat)[0]  # raster order
    lab = flat[idx]
    order = np.argsort(lab, kind="stable")
    bounds = np.searchsorted(lab[order], np.arange(1, n + 2))
    w = mask.config.width
    comps = []
    for i in range(n):
        cells = idx[order[bounds[i]:bounds[i + 1]]]
        comps.append(np.stack(np.divmod(cells, w), axis=1))
    comps.sort(key=lambda c: (int(c[0, 0]), int(c[0, 1])))
    return comps


def _centroid(cells: np.ndarray) -> Tuple[float, float]:
    m = cells.mean(axis=0)
    return (float(m[0]), float(m[1]))


def _associate(prev_cent, curr_cent, gate: float, resolution: float) -> dict:
    """Greedy closest-first pairing; returns {current index: previous index}."""
    pairs = []
    for i, (cr, cc) in enumerate(curr_cent):
        for j, (pr, pc) in enumerate(prev_cent):
            d = math.hypot(cr - pr, cc - pc) * resolution
            if d <= gate:
                pairs.append((d, i, j))
    pairs.sort()
    assoc, used = {}, set()
    for _, i, j in pairs:
        if i not in assoc and j not in used:
            assoc[i] = j
            used.add(j)
    return assoc


def _velocity(curr, prev, resolution, dt):
    return ((curr[1] - prev[1]) * resolution / dt, (curr[0] - prev[0]) * resolution / dt)


def match_tracks(prev: Sequence[np.ndarray], curr: Sequence[np.ndarray], cfg: PredictorConfig,
                 resolution: float, offset: Optional[int] = None) -> List[Track]:
    """Greedy nearest-centroid association between two component sets.

    ``prev`` must already be expressed in the current ego frame and lie
    ``offset`` frames (default ``cfg.track_offset``) in the past. Returns one
    Track per current component; unmatched components get zero velocity.
    """
    offset = cfg.track_offset if offset is None else offset
    dt = offset * cfg.sequence.frame_dt
    c_cent = [_centroid(c) for c in curr]
    p_cent = [_centroid(p) for p in prev]
    assoc = _associate(p_cent, c_cent, cfg.gate_radius, resolution)
    return [Track(i, np.asarray(c), c_cent[i],
                  _velocity(c_cent[i], p_cent[assoc[i]], resolution, dt) if i in assoc else (0.0, 0.0))
            for i, c in enumerate(curr)]


def build_tracks(masks: Sequence[DynamicMask], poses: Sequence[Pose2], cfg: PredictorConfig) -> List[Track]:
    """Tracks for the components of the last mask in a history.

    Each component takes its velocity from the largest frame offset, up to
    ``cfg.track_offset``, at which it finds a predecessor inside the gate.
    Earlier masks are warped into the current ego frame first.
    """
    current = masks[-1]
    comps = connected_components(current, cfg.connectivity, cfg.cluster_gap)
    if not comps:
        return []
    res = current.config.resolution
    cents = [_centroid(c) for c in comps]
    tracks = [Track(i, c, cents[i]) for i, c in enumerate(comps)]
    found = [False] * len(comps)
    for k in range(min(cfg.track_offset, len(masks) - 1), 0, -1):
        check_same_grid(masks[-1 - k], current)
        cells = warp_array(masks[-1 - k].cells, current.config, poses[-1 - k], poses[-1], 0)
        prev = [_centroid(c) for c in connected_components(DynamicMask(current.config, cells), cfg.connectivity,
                                                      cfg.cluster_gap)]
        dt = k * cfg.sequence.frame_dt
        for i, j in _associate(prev, cents, cfg.gate_radius, res).items():
            if not found[i]:
                tracks[i] = Track(i, comps[i], cents[i], _velocity(cents[i], prev[j], res, dt))
                found[i] = True
        if all(found):
            break
    return tracks


def _shift_grid(radius: int) -> np.ndarray:
    """Integer (dr, dc) shifts within ``radius``, nearest first, ties in raster order."""
    r = np.arange(-radius, radius + 1)
    d = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
    key = d[:, 0] ** 2 + d[:, 1] ** 2
    return d[np.lexsort((d[:, 1], d[:, 0], key))]


def template_velocity(cells: np.ndarray, weights: np.ndarray, past_occ: np.ndarray, frames: int,
                      cfg: PredictorConfig, resolution: float) -> Tuple[float, float]:
    """Velocity of a component from where it best fits an earlier occupancy field.

    ``past_occ`` holds m({O}) from ``frames`` steps back, already in the
    current ego frame, and ``weights`` the current m({O}) of each cell. Each
    candidate shift ``d`` is scored by the weighted mean of ``past_occ`` under
    ``cells - d``; the smallest shift reaching the best score wins, so a long
    object seen along its side does not slide further than the evidence
    requires. Scores under ``cfg.min_match`` give zero velocity.
    """
    total = float(weights.sum())
    if total <= 0.0:
        return (0.0, 0.0)
    dt = frames * cfg.sequence.frame_dt
    radius = int(math.ceil(cfg.max_speed * dt / resolution))
    shifts = _shift_grid(radius)
    h, w = past_occ.shape
    src = cells[None, :, :] - shifts[:, None, :]
    inside = (src[..., 0] >= 0) & (src[..., 0] < h) & (src[..., 1] >= 0) & (src[..., 1] < w)
    vals = past_occ[np.clip(src[..., 0], 0, h - 1), np.clip(src[..., 1], 0, w - 1)]
    score = np.where(inside, vals, 0.0) @ weights / total
    best = score.max()
    if best < cfg.min_match:
        return (0.0, 0.0)
    dr, dc = shifts[int(np.argmax(score >= best - 1e-9))]
    return (dc * resolution / dt, dr * resolution / dt)


def template_tracks(masks: Sequence[DynamicMask], history: Sequence[Eogm], cfg: PredictorConfig) -> List[Track]:
    """Tracks for the last mask with velocities from :func:`template_velocity`.

    The earlier field is the eOGM ``min(track_offset, len - 1)`` frames back,
    warped into the current ego frame.
    """
    current = masks[-1]
    comps = connected_components(current, cfg.connectivity, cfg.cluster_gap)
    if not comps:
        return []
    k = min(cfg.track_offset, len(history) - 1)
    if k < 1:
        return [Track(i, c, _centroid(c)) for i, c in enumerate(comps)]
    past, now = history[-1 - k], history[-1]
    check_same_grid(past, now, current)
    occ = warp_array(past.m_o, now.config, past.pose, now.pose, 0.0)
    res = current.config.resolution
    m_o = now.m_o
    return [Track(i, c, _centroid(c), template_velocity(c, m_o[c[:, 0], c[:, 1]], occ, k, cfg, res))
            for i, c in enumerate(comps)]


# ---------------------------------------------------------------------------
# prongs


def static_prong(static_eogm: Eogm, future_poses: Sequence[Pose2], gamma: float,
                 horizon: Optional[int] = None) -> List[Eogm]:
    """Warp the static grid into each future ego frame, discounting by ``gamma**(i+1)``."""
    if horizon is not None and len(future_poses) != horizon:
        raise LengthMismatch(f"expected {horizon} future poses, got {len(future_poses)}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError("gamma must lie in (0, 1]")
    out = []
    for i, pose in enumerate(future_poses):
        cells = warp_masses(static_eogm.cells, warp_gather_index(static_eogm.config, static_eogm.pose, pose))
        cells *= gamma ** (i + 1)
        out.append(Eogm.trusted(static_eogm.config, cells, pose, static_eogm.timestamp))
    return out


def _shift(v: float, t: float, res: float) -> int:
    return math.floor(v * t / res + 0.5)


def translate_tracks(dynamic_eogm: Eogm, tracks: Sequence[Track], t: float) -> np.ndarray:
    """Dynamic masses after ``t`` seconds of constant-velocity motion, in the T frame."""
    h, w = dynamic_eogm.config.shape
    res = dynamic_eogm.config.resolution
    out = np.zeros((h, w, 2))
    written = np.zeros((h, w), bool)
    for tr in tracks:
        dc, dr = _shift(tr.velocity[0], t, res), _shift(tr.velocity[1], t, res)
        rows, cols = tr.cells[:, 0], tr.cells[:, 1]
        vals = dynamic_eogm.cells[rows, cols]
        nr, nc = rows + dr, cols + dc
        keep = (nr >= 0) & (nr < h) & (nc >= 0) & (nc < w)
        nr, nc, vals = nr[keep], nc[keep], vals[keep]
        clash = written[nr, nc]
        if clash.any():
            fused, conflict = combine_arrays(out[nr[clash], nc[clash]], vals[clash])
            fused[conflict] = out[nr[clash], nc[clash]][conflict]
            vals = vals.copy()
            vals[clash] = fused
        out[nr, nc] = vals
        written[nr, nc] = True
    return out


def dynamic_prong(dynamic_eogm: Eogm, tracks: Sequence[Track], cfg: PredictorConfig,
                  future_poses: Optional[Sequence[Pose2]] = None) -> List[Eogm]:
    """Move every track's masses by ``round(v * (i+1) * dt / res)`` cells per step.

    Vacated cells become vacuous. Without ``future_poses`` the ego is held still.
    """
    n = cfg.sequence.horizon
    poses = list(future_poses) if future_poses is not None else [dynamic_eogm.pose] * n
    cfg_grid, t0 = dynamic_eogm.config, dynamic_eogm.timestamp
    out = []
    for i, pose in enumerate(poses):
        if not tracks:
            out.append(Eogm.trusted(cfg_grid, np.zeros(cfg_grid.shape + (2,)), pose, t0))
            continue
        moved = translate_tracks(dynamic_eogm, tracks, (i + 1) * cfg.sequence.frame_dt)
        idx = warp_gather_index(cfg_grid, dynamic_eogm.pose, pose)
        out.append(Eogm.trusted(cfg_grid, warp_masses(moved, idx), pose, t0))
    return out


def fuse_prongs(static_seq: Sequence[Eogm], dynamic_seq: Sequence[Eogm]) -> List[Eogm]:
    """Cellwise Dempster fusion; total conflict resolves to the dynamic prong."""
    if len(static_seq) != len(dynamic_seq):
        raise DimensionMismatch(f"prong lengths differ: {len(static_seq)} vs {len(dynamic_seq)}")
    out = []
    for s, d in zip(static_seq, dynamic_seq):
        check_same_grid(s, d)
        # vacuous cells are the identity of Dempster's rule, so only combine the rest
        active = (d.cells[..., 0] != 0.0) | (d.cells[..., 1] != 0.0)
        fused = s.cells.copy()
        if active.any():
            part, conflict = combine_arrays(s.cells[active], d.cells[active])
            part[conflict] = d.cells[active][conflict]
            fused[active] = part
        out.append(Eogm.trusted(s.config, fused, d.pose, d.timestamp))
    return out


# ---------------------------------------------------------------------------
# end-to-end


def extrapolate_poses(poses: Sequence[Pose2], horizon: int) -> List[Pose2]:
    """Constant-velocity continuation of the last two poses."""
    step = relative_pose(poses[-2], poses[-1])
    out, cur = [], poses[-1]
    for _ in range(horizon):
        cur = cur.compose(step)
        out.append(cur)
    return out


def _check_history(history: Sequence[Eogm], cfg: PredictorConfig, masks=None):
    if len(history) == 0:
        raise LengthMismatch("prediction needs a non-empty history")
    if len(history) != cfg.sequence.past_frames:
        raise LengthMismatch(f"expected {cfg.sequence.past_frames} history frames, got {len(history)}")
    if masks is not None and len(masks) != len(history):
        raise LengthMismatch(f"{len(masks)} masks for {len(history)} history frames")


def _future(history, future_poses, cfg):
    n = cfg.sequence.horizon
    if future_poses is None:
        return extrapolate_poses([g.pose for g in history], n)
    if len(future_poses) != n:
        raise LengthMismatch(f"expected {n} future poses, got {len(future_poses)}")
    return list(future_poses)


def predict_eogms(history: Sequence[Eogm], masks: Sequence[DynamicMask],
                  future_poses: Optional[Sequence[Pose2]] = None,
                  cfg: PredictorConfig = PredictorConfig()) -> List[Eogm]:
    """Fused evidential predictions for the next ``horizon`` frames."""
    _check_history(history, cfg, masks)
    poses = _future(history, future_poses, cfg)
    current = history[-1]
    check_same_grid(current, masks[-1])
    static, dynamic = split_by_mask(current, masks[-1])
    if cfg.velocity_mode == "template":
        tracks = template_tracks(masks, history, cfg)
    else:
        tracks = build_tracks(masks, [g.pose for g in history], cfg)
    fused = fuse_prongs(static_prong(static, poses, cfg.gamma),
                        dynamic_prong(dynamic, tracks, cfg, poses))
    dt = cfg.sequence.frame_dt
    return [Eogm.trusted(g.config, g.cells, g.pose, current.timestamp + (i + 1) * dt)
            for i, g in enumerate(fused)]


def predict(history: Sequence[Eogm], masks: Sequence[DynamicMask],
            future_poses: Optional[Sequence[Pose2]] = None,
            cfg: PredictorConfig = PredictorConfig()) -> List[Ogm]:
    return [g.to_ogm() for g in predict_eogms(history, masks, future_poses, cfg)]


def persistence_baseline(history: Sequence[Eogm], future_poses: Optional[Sequence[Pose2]] = None,
                         cfg: PredictorConfig = PredictorConfig()) -> List[Ogm]:
    """The whole current grid carried through the future poses, nothing moves."""
    _check_history(history, cfg)
    poses = _future(history, future_poses, cfg)
    dt = cfg.sequence.frame_dt
    t0 = history[-1].timestamp
    return [Eogm.trusted(g.config, g.cells, g.pose, t0 + (i + 1) * dt).to_ogm()
            for i, g in enumerate(static_prong(history[-1], poses, cfg.gamma))]
