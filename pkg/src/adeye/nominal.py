"""Nominal channel: map pre-pass, localization, clustering, candidate planning, tracking.

The channel is sensor-only: it consumes routed frames (gps, imu, lidar) and its
offline map artifacts, never the ground-truth topic. Its output is a
deterministic function of the routed frame history and its configuration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .command import ChannelCommand
from .geom import normalize_angle, polyline_lengths
from .sensors import GpsFix, ImuSample, LidarScan, SensorFrame, mount_pose
from .world import Actor, Lane, World
from .geom import Circle

MAP_FORMAT_VERSION = 1


@dataclass
class NominalConfig:
    alpha: float = 0.1  # gps blend weight in the complementary filter
    map_spacing: float = 0.25
    map_margin: float = 0.3
    cluster_threshold: float = 0.7
    cluster_min_points: int = 3
    candidate_count: int = 7
    horizon: float = 3.0
    lane_margin: float = 0.3
    w_clear: float = 1.0
    w_off: float = 0.1
    w_smooth: float = 1.0
    d_collide: float = 0.5
    clear_cap: float = 5.0
    lookahead_min: float = 3.0
    lookahead_gain: float = 0.5
    comfort_accel: float = 3.0
    speed_gain: float = 1.0
    target_speed: float = 10.0
    dropout_tolerance: int = 50  # ticks without gps and imu before degrading
    priority: int = 1


# ---------------------------------------------------------------------------
# offline mapping pre-pass


def _sample_perimeter(vertices: np.ndarray, spacing: float) -> np.ndarray:
    closed = np.vstack([vertices, vertices[:1]])
    cum = polyline_lengths(closed)
    total = cum[-1]
    n = max(1, int(math.ceil(total / spacing - 1e-9)))
    targets = np.arange(n) * (total / n)
    xs = np.interp(targets, cum, closed[:, 0])
    ys = np.interp(targets, cum, closed[:, 1])
    return np.column_stack([xs, ys])


def _sample_circle(cx: float, cy: float, r: float, spacing: float) -> np.ndarray:
    total = 2.0 * math.pi * r
    n = max(1, int(math.ceil(total / spacing - 1e-9)))
    ang = np.arange(n) * (2.0 * math.pi / n)
    return np.column_stack([cx + r * np.cos(ang), cy + r * np.sin(ang)])


def build_point_map(world: World, spacing: float = 0.25) -> np.ndarray:
    """Noise-free boundary samples of every static obstacle, (n, 2)."""
    chunks = []
    for obs in world.obstacles:
        if isinstance(obs.shape, Circle):
            chunks.append(_sample_circle(obs.shape.cx, obs.shape.cy, obs.shape.radius, spacing))
        else:
            chunks.append(_sample_perimeter(obs.shape.vertices, spacing))
    if not chunks:
        return np.empty((0, 2))
    return np.vstack(chunks)


def build_lane_map(world: World) -> list[Lane]:
    return [
        Lane(id=ln.id, centerline=ln.centerline.copy(), width=ln.width, successors=list(ln.successors))
        for ln in world.lanes
    ]


def build_map(world: World, spacing: float = 0.25) -> tuple[np.ndarray, list[Lane]]:
    return build_point_map(world, spacing), build_lane_map(world)


def save_map(out_dir: Path, name: str, point_map: np.ndarray, lane_map: list[Lane]) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pm_path = out_dir / f"{name}.pointmap.json"
    lm_path = out_dir / f"{name}.lanemap.json"
    pm_path.write_text(
        json.dumps(
            {"format_version": MAP_FORMAT_VERSION, "points": [[float(x), float(y)] for x, y in point_map]},
            indent=2,
        )
        + "\n"
    )
    lm_path.write_text(
        json.dumps(
            {
                "format_version": MAP_FORMAT_VERSION,
                "lanes": [
                    {
                        "id": ln.id,
                        "centerline": [[float(x), float(y)] for x, y in ln.centerline],
                        "width": ln.width,
                        "successors": ln.successors,
                    }
                    for ln in lane_map
                ],
            },
            indent=2,
        )
        + "\n"
    )
    return pm_path, lm_path


def load_map(pm_path: Path, lm_path: Path) -> tuple[np.ndarray, list[Lane]]:
    pm = json.loads(Path(pm_path).read_text())
    lm = json.loads(Path(lm_path).read_text())
    for doc, path in ((pm, pm_path), (lm, lm_path)):
        if doc.get("format_version") != MAP_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported map format_version {doc.get('format_version')!r}")
    points = np.array(pm["points"], dtype=float).reshape(-1, 2)
    lanes = [
        Lane(id=d["id"], centerline=np.array(d["centerline"], dtype=float),
             width=d["width"], successors=list(d["successors"]))
        for d in lm["lanes"]
    ]
    return points, lanes


# ---------------------------------------------------------------------------
# localization


@dataclass
class Estimate:
    x: float
    y: float
    heading: float
    speed: float


def localize(gps: Optional[GpsFix], imu: Optional[ImuSample], prev: Estimate,
             dt: float, alpha: float) -> Estimate:
    """Complementary filter: imu dead reckoning blended with gps position."""
    heading = prev.heading
    speed = prev.speed
    if imu is not None:
        heading = normalize_angle(heading + imu.yaw_rate * dt)
    x = prev.x + prev.speed * math.cos(heading) * dt
    y = prev.y + prev.speed * math.sin(heading) * dt
    if imu is not None:
        speed = max(0.0, speed + imu.accel * dt)
    if gps is not None:
        x = alpha * gps.x + (1.0 - alpha) * x
        y = alpha * gps.y + (1.0 - alpha) * y
    return Estimate(x, y, heading, speed)


# ---------------------------------------------------------------------------
# clustering


@dataclass
class Cluster:
    centroid: tuple[float, float]
    radius: float
    size: int


def cluster(points: np.ndarray, point_map: np.ndarray, config: NominalConfig) -> list[Cluster]:
    """Single-linkage Euclidean clustering after static-background removal."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return []
    if len(point_map):
        d2 = np.min(
            (points[:, None, 0] - point_map[None, :, 0]) ** 2
            + (points[:, None, 1] - point_map[None, :, 1]) ** 2,
            axis=1,
        )
        points = points[d2 > config.map_margin**2]
    n = len(points)
    if n == 0:
        return []
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    thr2 = config.cluster_threshold**2
    for i in range(n):
        for j in range(i + 1, n):
            dx = points[i, 0] - points[j, 0]
            dy = points[i, 1] - points[j, 1]
            if dx * dx + dy * dy <= thr2:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    clusters = []
    for members in sorted(groups.values(), key=lambda m: m[0]):
        if len(members) < config.cluster_min_points:
            continue
        pts = points[members]
        cx, cy = float(pts[:, 0].mean()), float(pts[:, 1].mean())
        radius = float(np.max(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)))
        clusters.append(Cluster((cx, cy), radius, len(members)))
    return clusters


# ---------------------------------------------------------------------------
# candidate trajectories


@dataclass
class CandidateTrajectory:
    lateral_offset: float
    points: np.ndarray  # (m, 2)
    cost: float = 0.0
    colliding: bool = False


def _nearest_lane(lanes: list[Lane], x: float, y: float) -> Optional[tuple[Lane, float]]:
    best = None
    for ln in lanes:
        cum = polyline_lengths(ln.centerline)
        # project onto each segment, keep global nearest
        p = np.array([x, y])
        a = ln.centerline[:-1]
        b = ln.centerline[1:]
        ab = b - a
        ln2 = np.sum(ab * ab, axis=1)
        t = np.clip(np.sum((p - a) * ab, axis=1) / ln2, 0.0, 1.0)
        q = a + t[:, None] * ab
        d = np.hypot(q[:, 0] - x, q[:, 1] - y)
        k = int(np.argmin(d))
        if best is None or d[k] < best[1]:
            best = (ln, float(d[k]), float(cum[k] + t[k] * math.sqrt(ln2[k])))
    if best is None:
        return None
    lane, dist, s = best
    if dist >= lane.width:
        return None
    return lane, s


def _lane_frame(lane: Lane, s_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Centerline points and unit tangents at the given arc positions."""
    cum = polyline_lengths(lane.centerline)
    s_values = np.clip(s_values, 0.0, cum[-1])
    xs = np.interp(s_values, cum, lane.centerline[:, 0])
    ys = np.interp(s_values, cum, lane.centerline[:, 1])
    idx = np.clip(np.searchsorted(cum, s_values, side="right") - 1, 0, len(cum) - 2)
    seg = lane.centerline[idx + 1] - lane.centerline[idx]
    norm = np.hypot(seg[:, 0], seg[:, 1])
    tangents = seg / norm[:, None]
    return np.column_stack([xs, ys]), tangents


def generate_candidates(lanes: list[Lane], estimate: Estimate,
                        config: NominalConfig) -> list[CandidateTrajectory]:
    """K laterally offset paths traced along the current lane's tangent field."""
    hit = _nearest_lane(lanes, estimate.x, estimate.y)
    if hit is None:
        return []
    lane, s0 = hit
    speed = max(estimate.speed, 1.0)
    length = speed * config.horizon
    ds = 0.25
    s_values = s0 + np.arange(0.0, length + ds, ds)
    centers, tangents = _lane_frame(lane, s_values)
    normals = np.column_stack([-tangents[:, 1], tangents[:, 0]])
    half = lane.width / 2 - config.lane_margin
    k = config.candidate_count
    offsets = np.linspace(-half, half, k) if k > 1 else np.zeros(1)
    return [
        CandidateTrajectory(lateral_offset=float(off), points=centers + off * normals)
        for off in offsets
    ]


def candidate_cost(cand: CandidateTrajectory, clusters: list[Cluster],
                   config: NominalConfig, ego_half_width: float) -> tuple[float, float]:
    """(cost, clearance); clearance is inf with no clusters."""
    clearance = math.inf
    for cl in clusters:
        d = np.hypot(cand.points[:, 0] - cl.centroid[0], cand.points[:, 1] - cl.centroid[1])
        clearance = min(clearance, float(np.min(d)) - cl.radius - ego_half_width)
    headings = np.arctan2(np.diff(cand.points[:, 1]), np.diff(cand.points[:, 0]))
    if len(headings) > 1:
        dh = np.abs(np.arctan2(np.sin(np.diff(headings)), np.cos(np.diff(headings))))
        ds = np.hypot(np.diff(cand.points[:-1, 0]), np.diff(cand.points[:-1, 1]))
        curv = float(np.mean(dh / np.maximum(ds, 1e-9)))
    else:
        curv = 0.0
    if clearance <= 0:
        clear_term = math.inf
    else:
        clear_term = max(0.0, 1.0 / clearance - 1.0 / config.clear_cap)
    cost = config.w_clear * clear_term + config.w_off * abs(cand.lateral_offset) + config.w_smooth * curv
    return cost, clearance


def select(candidates: list[CandidateTrajectory], clusters: list[Cluster],
           config: NominalConfig, ego_half_width: float) -> Optional[CandidateTrajectory]:
    """Minimum-cost non-colliding candidate; None when every candidate collides."""
    best = None
    for cand in candidates:
        cost, clearance = candidate_cost(cand, clusters, config, ego_half_width)
        cand.cost = cost
        cand.colliding = clearance < config.d_collide
        if cand.colliding:
            continue
        if best is None or cand.cost < best.cost:
            best = cand
    return best


def track(selected: CandidateTrajectory, estimate: Estimate, config: NominalConfig,
          wheelbase: float, channel_id: str, tick: int,
          steer_limit: float = math.inf) -> ChannelCommand:
    """Pure-pursuit steering on a lookahead point plus proportional speed regulation."""
    lookahead = max(config.lookahead_min, config.lookahead_gain * estimate.speed)
    d = np.hypot(selected.points[:, 0] - estimate.x, selected.points[:, 1] - estimate.y)
    ahead = np.nonzero(d >= lookahead)[0]
    target = selected.points[ahead[0]] if len(ahead) else selected.points[-1]
    alpha = normalize_angle(math.atan2(target[1] - estimate.y, target[0] - estimate.x) - estimate.heading)
    steer = math.atan(2.0 * wheelbase * math.sin(alpha) / lookahead)
    steer = max(-steer_limit, min(steer_limit, steer))
    accel = config.speed_gain * (config.target_speed - estimate.speed)
    accel = max(-config.comfort_accel, min(config.comfort_accel, accel))
    return ChannelCommand(channel_id=channel_id, priority=config.priority,
                          accel=accel, steer=steer, tick=tick)


# ---------------------------------------------------------------------------
# the channel


class NominalChannel:
    """Drives the mission from routed sensor frames and preloaded map artifacts."""

    def __init__(self, channel_id: str, config: NominalConfig, point_map: np.ndarray,
                 lane_map: list[Lane], initial: Estimate, wheelbase: float,
                 ego_half_width: float, steer_limit: float = math.inf,
                 debug_hook: Optional[Callable[[int, dict], None]] = None):
        self.channel_id = channel_id
        self.config = config
        self.priority = config.priority
        self.point_map = point_map
        self.lane_map = lane_map
        self.estimate = initial
        self.wheelbase = wheelbase
        self.ego_half_width = ego_half_width
        self.steer_limit = steer_limit
        self.heartbeat = 0
        self.ticks_without_pose_input = 0
        self.last_selected: Optional[CandidateTrajectory] = None
        self.debug_hook = debug_hook

    def step(self, tick: int, dt: float, frames: list[SensorFrame]) -> Optional[ChannelCommand]:
        gps = next((f.payload for f in frames if isinstance(f.payload, GpsFix)), None)
        imu = next((f.payload for f in frames if isinstance(f.payload, ImuSample)), None)
        scan = next((f for f in frames if isinstance(f.payload, LidarScan)), None)

        if gps is None and imu is None:
            self.ticks_without_pose_input += 1
            if self.ticks_without_pose_input > self.config.dropout_tolerance:
                return None  # degraded: no pose source, go silent
        else:
            self.ticks_without_pose_input = 0
        self.estimate = localize(gps, imu, self.estimate, dt, self.config.alpha)

        obstacles_points = self._scan_to_map_frame(scan) if scan is not None else np.empty((0, 2))
        clusters = cluster(obstacles_points, self.point_map, self.config)
        candidates = generate_candidates(self.lane_map, self.estimate, self.config)
        self.heartbeat += 1
        if not candidates:
            return None  # off-lane or unmapped: refuse to drive
        chosen = select(candidates, clusters, self.config, self.ego_half_width)
        if self.debug_hook is not None:
            self.debug_hook(tick, {"candidates": candidates, "clusters": clusters, "selected": chosen})
        if chosen is None:
            # every path blocked: request a full stop in-channel
            return ChannelCommand(self.channel_id, self.priority,
                                  -self.config.comfort_accel, 0.0, tick)
        self.last_selected = chosen
        return track(chosen, self.estimate, self.config, self.wheelbase, self.channel_id,
                     tick, self.steer_limit)

    def _scan_to_map_frame(self, frame: SensorFrame) -> np.ndarray:
        scan = frame.payload
        pts = []
        est = self.estimate
        for a, r in zip(scan.angles, scan.ranges):
            if r is None:
                continue
            ang = est.heading + a
            pts.append((est.x + r * math.cos(ang), est.y + r * math.sin(ang)))
        return np.array(pts, dtype=float).reshape(-1, 2)
