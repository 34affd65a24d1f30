"""Synthetic 2-D driving scenes: lidar scans, ego motion and ground-truth labels.

A world is a set of static rectangles and walls plus rectangular agents that
follow polylines under piecewise-constant speed profiles. Scans return the
nearest boundary hit of every beam as a z = 1.0 point in the ego frame.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidSpec
from .grid import DynamicMask, GridConfig, Pose2, Sgm, points_to_cells
from .representation import PointCloud, RepresentationConfig, build_sgm

MOVING_SPEED = 0.05  # m/s; slower agents are labelled static
_EPS = 1e-9


# ---------------------------------------------------------------------------
# world description


@dataclass(frozen=True)
class Rect:
    """Axis-aligned static box, given by its center and (size_x, size_y)."""

    center: Tuple[float, float]
    size: Tuple[float, float]


@dataclass(frozen=True)
class Wall:
    start: Tuple[float, float]
    end: Tuple[float, float]


@dataclass(frozen=True)
class Trajectory:
    """Polyline path with a piecewise-constant speed profile.

    ``speeds`` holds ``(t, v)`` breakpoints: speed ``v`` applies from time
    ``t`` until the next breakpoint. Before the first breakpoint the body rests
    at the first waypoint. A single waypoint means a body that never moves and
    faces ``heading``.
    """

    waypoints: Tuple[Tuple[float, float], ...]
    speeds: Tuple[Tuple[float, float], ...] = ((0.0, 0.0),)
    heading: float = 0.0

    def validate(self, what: str):
        if len(self.waypoints) == 0:
            raise InvalidSpec(f"{what}: trajectory needs at least one waypoint")
        pts = np.asarray(self.waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or not np.all(np.isfinite(pts)):
            raise InvalidSpec(f"{what}: waypoints must be finite (x, y) pairs")
        if len(pts) > 1 and np.any(np.hypot(*np.diff(pts, axis=0).T) <= _EPS):
            raise InvalidSpec(f"{what}: consecutive waypoints coincide")
        if len(self.speeds) == 0:
            raise InvalidSpec(f"{what}: speed profile is empty")
        times = [t for t, _ in self.speeds]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InvalidSpec(f"{what}: speed breakpoints must be strictly increasing in time")
        if any(not (math.isfinite(v) and v >= 0) for _, v in self.speeds):
            raise InvalidSpec(f"{what}: speeds must be finite and >= 0")

    def _distance(self, t: float) -> float:
        s = 0.0
        for i, (t0, v) in enumerate(self.speeds):
            if t <= t0:
                break
            t1 = self.speeds[i + 1][0] if i + 1 < len(self.speeds) else math.inf
            s += v * (min(t, t1) - t0)
        return s

    def _length(self) -> float:
        pts = np.asarray(self.waypoints, dtype=float)
        return float(np.hypot(*np.diff(pts, axis=0).T).sum()) if len(pts) > 1 else 0.0

    def pose(self, t: float) -> Pose2:
        pts = np.asarray(self.waypoints, dtype=float)
        if len(pts) == 1:
            return Pose2(pts[0, 0], pts[0, 1], self.heading)
        s = self._distance(t)
        seg = np.diff(pts, axis=0)
        lens = np.hypot(seg[:, 0], seg[:, 1])
        for i, ln in enumerate(lens):
            if s <= ln or i == len(lens) - 1:
                u = min(s, ln) / ln
                p = pts[i] + u * seg[i]
                return Pose2(p[0], p[1], math.atan2(seg[i, 1], seg[i, 0]))
            s -= ln
        raise AssertionError("unreachable")

    def speed(self, t: float) -> float:
        if len(self.waypoints) == 1 or self._distance(t) >= self._length():
            return 0.0
        v = 0.0
        for t0, vi in self.speeds:
            if t >= t0:
                v = vi
        return v


@dataclass(frozen=True)
class Agent:
    """Rectangular body (length along heading, width across) on a trajectory."""

    size: Tuple[float, float]
    trajectory: Trajectory

    def corners(self, t: float) -> np.ndarray:
        pose = self.trajectory.pose(t)
        hl, hw = self.size[0] / 2, self.size[1] / 2
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        return pose.transform_points(local)


@dataclass(frozen=True)
class Sensor:
    beams: int = 720
    max_range: float = 30.0
    span: float = 2 * math.pi
    noise_sigma: float = 0.02
    ground: bool = False  # inject ground returns at z = 0 for the ground filter

    def angles(self) -> np.ndarray:
        """Beam angles relative to the ego heading."""
        return -self.span / 2 + (np.arange(self.beams) + 0.5) * (self.span / self.beams)


@dataclass(frozen=True)
class WorldSpec:
    rects: Tuple[Rect, ...] = ()
    walls: Tuple[Wall, ...] = ()
    agents: Tuple[Agent, ...] = ()
    ego: Trajectory = field(default_factory=lambda: Trajectory(((0.0, 0.0),)))
    sensor: Sensor = field(default_factory=Sensor)
    seed: int = 0

    def validate(self):
        s = self.sensor
        if s.beams < 1:
            raise InvalidSpec("sensor needs at least one beam")
        if not s.max_range > 0:
            raise InvalidSpec("sensor max range must be > 0")
        if not 0 < s.span <= 2 * math.pi:
            raise InvalidSpec("sensor span must lie in (0, 2*pi]")
        if not s.noise_sigma >= 0:
            raise InvalidSpec("sensor noise sigma must be >= 0")
        for r in self.rects:
            if not (r.size[0] > 0 and r.size[1] > 0):
                raise InvalidSpec("static rectangles need positive size")
        for w in self.walls:
            if math.hypot(w.end[0] - w.start[0], w.end[1] - w.start[1]) <= _EPS:
                raise InvalidSpec("walls need distinct end points")
        for i, a in enumerate(self.agents):
            if not (a.size[0] > 0 and a.size[1] > 0):
                raise InvalidSpec(f"agent {i}: footprint must be non-degenerate")
            a.trajectory.validate(f"agent {i}")
        self.ego.validate("ego")

    def to_json(self) -> Dict:
        return asdict(self)

    def digest(self) -> str:
        return spec_digest([self])


def _pair(v, what) -> Tuple[float, float]:
    try:
        a, b = v
        return (float(a), float(b))
    except (TypeError, ValueError) as exc:
        raise InvalidSpec(f"{what}: expected a pair of numbers, got {v!r}") from exc


def _trajectory(d, what) -> Trajectory:
    if not isinstance(d, dict) or "waypoints" not in d:
        raise InvalidSpec(f"{what}: trajectory must be an object with 'waypoints'")
    wps = tuple(_pair(p, f"{what} waypoint") for p in d["waypoints"])
    speeds = d.get("speeds", [[0.0, 0.0]])
    if isinstance(speeds, (int, float)):
        speeds = [[0.0, speeds]]
    return Trajectory(wps, tuple(_pair(s, f"{what} speed") for s in speeds), float(d.get("heading", 0.0)))


def spec_from_json(doc: Dict) -> WorldSpec:
    """Build and validate a WorldSpec from its JSON document form."""
    if not isinstance(doc, dict):
        raise InvalidSpec("world spec must be a JSON object")
    try:
        rects = tuple(Rect(_pair(r["center"], "rect center"), _pair(r["size"], "rect size"))
                      for r in doc.get("rects", []))
        walls = tuple(Wall(_pair(w["start"], "wall start"), _pair(w["end"], "wall end"))
                      for w in doc.get("walls", []))
        agents = tuple(Agent(_pair(a["size"], "agent size"), _trajectory(a["trajectory"], f"agent {i}"))
                       for i, a in enumerate(doc.get("agents", [])))
        ego = _trajectory(doc.get("ego", {"waypoints": [[0.0, 0.0]]}), "ego")
        sd = doc.get("sensor", {})
        sensor = Sensor(int(sd.get("beams", 720)), float(sd.get("max_range", 30.0)),
                        float(sd.get("span", 2 * math.pi)), float(sd.get("noise_sigma", 0.02)),
                        bool(sd.get("ground", False)))
        seed = int(doc.get("seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidSpec):
            raise
        raise InvalidSpec(f"malformed world spec: {exc!r}") from exc
    spec = WorldSpec(rects, walls, agents, ego, sensor, seed)
    spec.validate()
    return spec


def spec_digest(specs: Sequence[WorldSpec]) -> str:
    text = json.dumps([s.to_json() for s in specs], sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


# ---------------------------------------------------------------------------
# sensing


def _segments(spec: WorldSpec, t: float) -> Tuple[np.ndarray, np.ndarray]:
    """Every shape boundary at time t as (M, 4) rows of x0, y0, x1, y1.

    Also returns, per segment, the index of the agent it belongs to (-1 for
    static shapes).
    """
    segs, owner = [], []
    for r in spec.rects:
        cx, cy = r.center
        hx, hy = r.size[0] / 2, r.size[1] / 2
        c = np.array([[cx + hx, cy + hy], [cx - hx, cy + hy], [cx - hx, cy - hy], [cx + hx, cy - hy]])
        segs.append(np.hstack([c, np.roll(c, -1, axis=0)]))
        owner.append(np.full(4, -1))
    for w in spec.walls:
        segs.append(np.array([[*w.start, *w.end]]))
        owner.append(np.full(1, -1))
    for i, a in enumerate(spec.agents):
        c = a.corners(t)
        segs.append(np.hstack([c, np.roll(c, -1, axis=0)]))
        owner.append(np.full(4, i))
    if not segs:
        return np.zeros((0, 4)), np.zeros(0, np.int64)
    return np.vstack(segs), np.concatenate(owner)


def cast_rays(origin: Tuple[float, float], angles: np.ndarray, segments: np.ndarray,
              max_range: float) -> Tuple[np.ndarray, np.ndarray]:
    """Distance to the nearest segment along each world-frame angle.

    Returns ``(ranges, index)``; beams without a hit inside ``max_range`` get
    range inf and index -1.
    """
    n = len(angles)
    if len(segments) == 0 or n == 0:
        return np.full(n, np.inf), np.full(n, -1, np.int64)
    dx, dy = np.cos(angles)[:, None], np.sin(angles)[:, None]
    px, py = segments[:, 0] - origin[0], segments[:, 1] - origin[1]
    ex, ey = segments[:, 2] - segments[:, 0], segments[:, 3] - segments[:, 1]
    denom = dx * ey - dy * ex
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (px * ey - py * ex) / denom
        u = (px * dy - py * dx) / denom
    ok = (np.abs(denom) > 1e-12) & (t > _EPS) & (u >= 0.0) & (u <= 1.0)
    t = np.where(ok, t, np.inf)
    idx = np.argmin(t, axis=1)
    ranges = t[np.arange(n), idx]
    miss = ranges > max_range
    ranges[miss] = np.inf
    return ranges, np.where(miss, -1, idx)


def _frame_rng(seed: int, frame: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(frame)]))


def _returns(spec: WorldSpec, t: float, ego: Pose2):
    """Noise-free hits: (ego-frame beam angles, ranges, owning agent or -1)."""
    local = spec.sensor.angles()
    segs, owner = _segments(spec, t)
    ranges, idx = cast_rays((ego.x, ego.y), local + ego.heading, segs, spec.sensor.max_range)
    hit = idx >= 0
    return local[hit], ranges[hit], owner[idx[hit]]


def _points(angles, ranges) -> np.ndarray:
    return np.stack([ranges * np.cos(angles), ranges * np.sin(angles), np.ones_like(ranges)], axis=1)


def lidar_scan(spec: WorldSpec, t: float, ego: Pose2, rng: Optional[np.random.Generator] = None,
               noise: bool = True) -> PointCloud:
    """One scan from ``ego`` at time ``t``; returns lie in the ego frame at z = 1.0."""
    sensor = spec.sensor
    a, r, _ = _returns(spec, t, ego)
    if noise and sensor.noise_sigma > 0:
        rng = rng if rng is not None else _frame_rng(spec.seed, 0)
        r = np.maximum(r + rng.normal(0.0, sensor.noise_sigma, size=r.shape), 0.0)
    pts = _points(a, r)
    if sensor.ground:
        gr = np.linspace(1.0, min(sensor.max_range, 10.0), 10)
        ga = sensor.angles()[::4]
        gx = (gr[None, :] * np.cos(ga)[:, None]).ravel()
        gy = (gr[None, :] * np.sin(ga)[:, None]).ravel()
        pts = np.vstack([pts, np.stack([gx, gy, np.zeros_like(gx)], axis=1)])
    return PointCloud(pts, t, ego)


def observed_dynamic_mask(spec: WorldSpec, t: float, ego: Pose2, grid: GridConfig) -> DynamicMask:
    """Cells holding at least one noise-free return from a moving agent.

    This is the per-return labelling projected onto the grid: the moving cells
    a scan can actually see.
    """
    a, r, owner = _returns(spec, t, ego)
    moving = np.array([ag.trajectory.speed(t) > MOVING_SPEED for ag in spec.agents] + [False])
    sel = moving[owner] if len(owner) else np.zeros(0, bool)
    rows, cols, inside = points_to_cells(_points(a[sel], r[sel])[:, :2], grid)
    cells = np.zeros(grid.shape, np.uint8)
    cells[rows[inside], cols[inside]] = 1
    return DynamicMask(grid, cells, ego, t)


def _inside_box(px, py, corners: np.ndarray) -> np.ndarray:
    """Points inside the (convex, counter-clockwise) quadrilateral ``corners``."""
    inside = np.ones(np.shape(px), bool)
    for i in range(4):
        x0, y0 = corners[i]
        x1, y1 = corners[(i + 1) % 4]
        inside &= (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0) >= 0
    return inside


def gt_dynamic_mask(spec: WorldSpec, t: float, ego: Pose2, grid: GridConfig) -> DynamicMask:
    """Cells whose centers fall inside any agent moving faster than ``MOVING_SPEED``."""
    xs, ys = grid.cell_centers()
    world = ego.transform_points(np.stack([xs, ys], axis=-1))
    mask = np.zeros(grid.shape, bool)
    for a in spec.agents:
        if a.trajectory.speed(t) > MOVING_SPEED:
            mask |= _inside_box(world[..., 0], world[..., 1], a.corners(t))
    return DynamicMask(grid, mask.astype(np.uint8), ego, t)


# ---------------------------------------------------------------------------
# sequences


@dataclass(frozen=True, eq=False)
class Frame:
    cloud: PointCloud
    ego_pose: Pose2
    gt_mask: DynamicMask
    gt_sgm: Sgm
    timestamp: float
    # moving cells that actually hold a return; footprint interiors are never seen
    seen_mask: Optional[DynamicMask] = None

    def __eq__(self, other):
        return (isinstance(other, Frame) and self.timestamp == other.timestamp
                and self.ego_pose == other.ego_pose and self.cloud == other.cloud
                and self.gt_mask == other.gt_mask and self.gt_sgm == other.gt_sgm
                and self.seen_mask == other.seen_mask)

    __hash__ = None


@dataclass(eq=False)
class Dataset:
    sequences: List[List[Frame]]
    config: RepresentationConfig = field(default_factory=RepresentationConfig)
    seed: int = 0
    spec_hash: str = ""
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.names:
            self.names = [f"seq_{i:03d}" for i in range(len(self.sequences))]

    def __eq__(self, other):
        return (isinstance(other, Dataset) and self.config == other.config
                and self.seed == other.seed and self.spec_hash == other.spec_hash
                and self.names == other.names and self.sequences == other.sequences)

    __hash__ = None


def simulate(spec: WorldSpec, frames: int, frame_dt: float = 0.1,
             config: RepresentationConfig = RepresentationConfig()) -> List[Frame]:
    """Advance the world ``frames`` steps of ``frame_dt`` and record one Frame per step.

    Range noise for frame i is drawn from a generator seeded by (seed, i), so
    the output is a pure function of the spec.
    """
    if frames < 1:
        raise InvalidSpec("frames must be >= 1")
    if not frame_dt > 0:
        raise InvalidSpec("frame_dt must be > 0")
    spec.validate()
    out = []
    for i in range(frames):
        t = i * frame_dt
        ego = spec.ego.pose(t)
        cloud = lidar_scan(spec, t, ego, _frame_rng(spec.seed, i))
        # stored at f32 precision, matching the on-disk format, so datasets round-trip exactly
        cloud = PointCloud(cloud.points.astype(np.float32), t, ego)
        clean = lidar_scan(spec, t, ego, noise=False)
        gt_sgm = build_sgm(clean, config)
        out.append(Frame(cloud, ego, gt_dynamic_mask(spec, t, ego, config.grid), gt_sgm, t,
                         observed_dynamic_mask(spec, t, ego, config.grid)))
    return out


# ---------------------------------------------------------------------------
# standard scenes

SUITE_SEQUENCES_PER_KIND = 10
SUITE_FRAMES = 20


def _street(rng: np.random.Generator, half_width: float) -> List[Wall]:
    """Building fronts along both sides of a road running along +x."""
    walls = []
    for side in (-1, 1):
        x = -45.0
        while x < 90.0:
            length = float(rng.uniform(12.0, 25.0))
            walls.append(Wall((x, side * half_width), (x + length, side * half_width)))
            x += length + float(rng.uniform(2.0, 5.0))
    return walls


def _lane_agent(rng, y: float, direction: int, x0: float, speed: float, size) -> Agent:
    far = x0 + direction * 200.0
    return Agent(size, Trajectory(((x0, y), (far, y)), ((0.0, speed),)))


def _car_size(rng) -> Tuple[float, float]:
    return (float(rng.uniform(4.0, 5.0)), float(rng.uniform(1.7, 2.0)))


def traffic_scene(rng: np.random.Generator, seed: int) -> WorldSpec:
    """Several vehicles driving in both directions around a moving ego."""
    ego_speed = float(rng.uniform(3.0, 6.0))
    agents = []
    lanes = [(-3.5, 1), (3.5, -1), (-7.0, 1) if rng.random() < 0.5 else (7.0, -1)]
    for y, direction in lanes:
        n = int(rng.integers(1, 3))
        xs = rng.uniform(-15.0, 18.0, size=n)
        xs.sort()
        for j, x0 in enumerate(xs):
            if j and x0 - xs[j - 1] < 8.0:
                continue
            agents.append(_lane_agent(rng, y, direction, float(x0), float(rng.uniform(3.0, 8.0)),
                                      _car_size(rng)))
    ahead = float(rng.uniform(8.0, 14.0))
    agents.append(_lane_agent(rng, 0.0, 1, ahead, ego_speed + float(rng.uniform(2.0, 4.0)), _car_size(rng)))
    ego = Trajectory(((0.0, 0.0), (200.0, 0.0)), ((0.0, ego_speed),))
    return WorldSpec(walls=tuple(_street(rng, 10.5)), agents=tuple(agents), ego=ego, seed=seed)


def parked_scene(rng: np.random.Generator, seed: int) -> WorldSpec:
    """Parked cars along both curbs and one vehicle driving past."""
    ego_speed = float(rng.uniform(2.0, 5.0))
    agents = []
    for side in (-1, 1):
        x = float(rng.uniform(-18.0, -12.0))
        while x < 22.0:
            size = _car_size(rng)
            agents.append(Agent(size, Trajectory(((x, side * 5.5),), ((0.0, 0.0),))))
            x += size[0] + float(rng.uniform(1.0, 4.0))
    y, direction = (3.0, -1) if rng.random() < 0.5 else (-3.0, 1)
    x0 = float(rng.uniform(-10.0, 12.0))
    agents.append(_lane_agent(rng, y, direction, x0, float(rng.uniform(3.0, 7.0)), _car_size(rng)))
    ego = Trajectory(((0.0, 0.0), (200.0, 0.0)), ((0.0, ego_speed),))
    return WorldSpec(walls=tuple(_street(rng, 9.5)), agents=tuple(agents), ego=ego, seed=seed)


def pedestrian_scene(rng: np.random.Generator, seed: int) -> WorldSpec:
    """Pedestrians crossing in front of a slow or waiting ego."""
    ego_speed = float(rng.uniform(0.0, 1.5))
    agents = []
    n = int(rng.integers(2, 5))
    for x in rng.uniform(4.0, 14.0, size=n):
        side = 1 if rng.random() < 0.5 else -1
        y0 = side * float(rng.uniform(2.0, 7.0))
        size = (float(rng.uniform(0.6, 0.8)), float(rng.uniform(0.6, 0.8)))
        agents.append(Agent(size, Trajectory(((float(x), y0), (float(x), -side * 20.0)),
                                             ((0.0, float(rng.uniform(1.0, 1.8))),))))
    for side in (-1, 1):
        agents.append(Agent(_car_size(rng),
                            Trajectory(((float(rng.uniform(-12.0, -4.0)), side * 5.5),), ((0.0, 0.0),))))
    if ego_speed > 0:
        ego = Trajectory(((0.0, 0.0), (200.0, 0.0)), ((0.0, ego_speed),))
    else:
        ego = Trajectory(((0.0, 0.0),))
    return WorldSpec(walls=tuple(_street(rng, 9.0)), agents=tuple(agents), ego=ego, seed=seed)


SCENE_KINDS = (("traffic", traffic_scene), ("parked", parked_scene), ("pedestrians", pedestrian_scene))


def suite_specs(seed: int) -> List[Tuple[str, WorldSpec]]:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EED]))
    out = []
    for kind, make in SCENE_KINDS:
        for j in range(SUITE_SEQUENCES_PER_KIND):
            sub = int(rng.integers(0, 2**31 - 1))
            out.append((f"{kind}_{j:02d}", make(rng, sub)))
    return out


def standard_suite(seed: int, config: RepresentationConfig = RepresentationConfig()) -> Dataset:
    """30 sequences of 20 frames: traffic, parked cars with one mover, crossing pedestrians."""
    named = suite_specs(seed)
    seqs = [simulate(spec, SUITE_FRAMES, config.frame_dt, config) for _, spec in named]
    return Dataset(seqs, config, int(seed), spec_digest([s for _, s in named]), [n for n, _ in named])
