"""Safety channel: ground-truth safety grid, monitor, latch and jerk-limited safe stop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .command import ChannelCommand
from .geom import Circle, convex_polygons_overlap
from .world import Scene

TRIGGER_REASONS = ("limit_violation", "heartbeat_loss", "predicted_collision")
# fixed priority, highest last: predicted_collision wins over heartbeat_loss
# wins over limit_violation


@dataclass
class MonitorConfig:
    resolution: float = 0.5
    r_inf: float = 2.0
    rating_threshold: float = 0.8
    heartbeat_timeout: int = 20  # ticks
    a_max: float = 6.0  # braking capability
    t_react: float = 0.1
    margin: float = 1.0
    j_max: float = 10.0
    steer_max: float = 0.6  # command limit
    a_cmd_max: float = 6.0  # command limit
    hold_accel: float = -1.0  # brake hold after the stop completes
    priority: int = 10


@dataclass
class SafetyGrid:
    origin: tuple[float, float]  # world coordinates of cell (0, 0)
    resolution: float
    ratings: np.ndarray  # (height, width), row i = y index, col j = x index

    @property
    def height(self) -> int:
        return self.ratings.shape[0]

    @property
    def width(self) -> int:
        return self.ratings.shape[1]

    def rating_at(self, x: float, y: float) -> float:
        j = int(math.floor((x - self.origin[0]) / self.resolution))
        i = int(math.floor((y - self.origin[1]) / self.resolution))
        if 0 <= i < self.height and 0 <= j < self.width:
            return float(self.ratings[i, j])
        return 0.0


def _cell_rect(x0, y0, x1, y1) -> np.ndarray:
    return np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])


def _mark_bodies(occ: np.ndarray, scene: Scene, resolution: float,
                 xmin: float, ymin: float, statics: bool, actors: bool):
    h, w = occ.shape

    def mark_circle(cx, cy, r):
        j0 = max(0, int(math.floor((cx - r - xmin) / resolution)))
        j1 = min(w - 1, int(math.floor((cx + r - xmin) / resolution)))
        i0 = max(0, int(math.floor((cy - r - ymin) / resolution)))
        i1 = min(h - 1, int(math.floor((cy + r - ymin) / resolution)))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                qx = min(max(cx, xmin + j * resolution), xmin + (j + 1) * resolution)
                qy = min(max(cy, ymin + i * resolution), ymin + (i + 1) * resolution)
                if math.hypot(qx - cx, qy - cy) <= r:
                    occ[i, j] = 1

    def mark_polygon(poly: np.ndarray):
        pxmin, pymin = poly.min(axis=0)
        pxmax, pymax = poly.max(axis=0)
        j0 = max(0, int(math.floor((pxmin - xmin) / resolution)))
        j1 = min(w - 1, int(math.floor((pxmax - xmin) / resolution)))
        i0 = max(0, int(math.floor((pymin - ymin) / resolution)))
        i1 = min(h - 1, int(math.floor((pymax - ymin) / resolution)))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                cell = _cell_rect(
                    xmin + j * resolution, ymin + i * resolution,
                    xmin + (j + 1) * resolution, ymin + (i + 1) * resolution,
                )
                if convex_polygons_overlap(cell, poly):
                    occ[i, j] = 1

    if statics:
        for obs in scene.world.obstacles:
            if isinstance(obs.shape, Circle):
                mark_circle(obs.shape.cx, obs.shape.cy, obs.shape.radius)
            else:
                mark_polygon(obs.shape.vertices)
    if actors:
        for actor in scene.actors.values():
            if actor.kind != "ego":
                mark_polygon(actor.footprint())


def build_occupancy(scene: Scene, resolution: float) -> tuple[np.ndarray, tuple[float, float]]:
    """Cells overlapped by any obstacle or non-ego actor footprint (ego excluded)."""
    xmin, ymin, xmax, ymax = scene.world.bounds
    w = int(math.ceil((xmax - xmin) / resolution))
    h = int(math.ceil((ymax - ymin) / resolution))
    occ = np.zeros((h, w), dtype=np.uint8)
    _mark_bodies(occ, scene, resolution, xmin, ymin, statics=True, actors=True)
    return occ, (xmin, ymin)


class GridBuilder:
    """Per-run grid factory; the static-obstacle layer is rasterized once."""

    def __init__(self, config: MonitorConfig):
        self.config = config
        self._static: Optional[np.ndarray] = None
        self._origin: Optional[tuple[float, float]] = None

    def build(self, scene: Scene) -> SafetyGrid:
        res = self.config.resolution
        if self._static is None:
            xmin, ymin, xmax, ymax = scene.world.bounds
            w = int(math.ceil((xmax - xmin) / res))
            h = int(math.ceil((ymax - ymin) / res))
            self._static = np.zeros((h, w), dtype=np.uint8)
            self._origin = (xmin, ymin)
            _mark_bodies(self._static, scene, res, xmin, ymin, statics=True, actors=False)
        occ = self._static.copy()
        _mark_bodies(occ, scene, res, self._origin[0], self._origin[1], statics=False, actors=True)
        ratings = kernels.inflate_grid(occ, res, self.config.r_inf)
        return SafetyGrid(origin=self._origin, resolution=res, ratings=ratings)


def build_grid(scene: Scene, config: MonitorConfig) -> SafetyGrid:
    """Occupied cells rate 1.0; linear inflation decays to 0 at r_inf."""
    return GridBuilder(config).build(scene)


@dataclass
class Verdict:
    status: str  # ok | trigger
    reason: Optional[str] = None
    evidence: dict = field(default_factory=dict)


def braking_distance(speed: float, config: MonitorConfig) -> float:
    """Monitor's required clear distance: margin + v*t_react + v^2/(2*a_max)."""
    return config.margin + speed * config.t_react + speed * speed / (2.0 * config.a_max)


def monitor(scene: Scene, grid: SafetyGrid, heartbeat_age: int,
            last_nominal_command: Optional[ChannelCommand],
            config: MonitorConfig) -> Verdict:
    """Trigger on command limit violation, heartbeat loss, or predicted collision."""
    ego = scene.ego

    limit = None
    if last_nominal_command is not None:
        if abs(last_nominal_command.steer) > config.steer_max + 1e-12:
            limit = {"field": "steer", "value": last_nominal_command.steer}
        elif abs(last_nominal_command.accel) > config.a_cmd_max + 1e-12:
            limit = {"field": "accel", "value": last_nominal_command.accel}

    heartbeat = heartbeat_age > config.heartbeat_timeout

    predicted = None
    need = braking_distance(ego.speed, config)
    step = config.resolution / 4.0
    n = int(math.ceil(need / step)) + 1
    dx, dy = math.cos(ego.pose.heading), math.sin(ego.pose.heading)
    # march from the front bumper: clearances are what the bumper can consume
    fx = ego.pose.x + 0.5 * ego.length * dx
    fy = ego.pose.y + 0.5 * ego.length * dy
    for k in range(n + 1):
        d = min(k * step, need)
        x = fx + d * dx
        y = fy + d * dy
        if grid.rating_at(x, y) >= config.rating_threshold:
            predicted = {"distance": d, "required": need, "cell": [x, y]}
            break

    if predicted is not None:
        return Verdict("trigger", "predicted_collision", predicted)
    if heartbeat:
        return Verdict("trigger", "heartbeat_loss", {"age_ticks": heartbeat_age})
    if limit is not None:
        return Verdict("trigger", "limit_violation", limit)
    return Verdict("ok")


# ---------------------------------------------------------------------------
# jerk-limited safe stop


@dataclass
class SafeStopPlan:
    """Piecewise-constant-jerk deceleration profile from v0 down to exactly 0."""

    v0: float
    phases: list[tuple[float, float, float]]  # (duration, accel at phase start, jerk)

    @property
    def stop_time(self) -> float:
        return sum(p[0] for p in self.phases)

    @property
    def stop_distance(self) -> float:
        x = 0.0
        v = self.v0
        for dur, a0, j in self.phases:
            x += v * dur + 0.5 * a0 * dur**2 + j * dur**3 / 6.0
            v += a0 * dur + 0.5 * j * dur**2
        return x

    def speed_at(self, t: float) -> float:
        if t <= 0:
            return self.v0
        v = self.v0
        for dur, a0, j in self.phases:
            if t < dur:
                return max(0.0, v + a0 * t + 0.5 * j * t * t)
            v += a0 * dur + 0.5 * j * dur**2
            t -= dur
        return 0.0

    def accel_at(self, t: float) -> float:
        if t < 0:
            return 0.0
        for dur, a0, j in self.phases:
            if t < dur:
                return a0 + j * t
            t -= dur
        return 0.0


def plan_safe_stop(speed: float, config: MonitorConfig) -> SafeStopPlan:
    """Trapezoidal (or triangular) jerk-limited deceleration to standstill."""
    v0 = max(0.0, speed)
    if v0 == 0.0:
        return SafeStopPlan(v0=0.0, phases=[])
    a, j = config.a_max, config.j_max
    if v0 >= a * a / j:
        t_ramp = a / j
        t_hold = (v0 - a * a / j) / a
        phases = [(t_ramp, 0.0, -j), (t_hold, -a, 0.0), (t_ramp, -a, j)]
    else:
        a_peak = math.sqrt(v0 * j)
        t_ramp = a_peak / j
        phases = [(t_ramp, 0.0, -j), (t_ramp, -a_peak, j)]
    return SafeStopPlan(v0=v0, phases=phases)


def jerk_corrected_stop_distance(speed: float, config: MonitorConfig) -> float:
    """Closed-form distance of the jerk-limited stop profile."""
    return plan_safe_stop(speed, config).stop_distance


def guarantee_envelope(speed: float, config: MonitorConfig) -> float:
    """Documented guaranteed-stop envelope: clear distance at latch that ensures no collision.

    margin + v*t_react + v^2/(2*a_max) + jerk correction, where the jerk
    correction is the extra distance of the jerk-limited profile over the
    constant-deceleration one.
    """
    correction = jerk_corrected_stop_distance(speed, config) - speed * speed / (2.0 * config.a_max)
    return braking_distance(speed, config) + correction


# ---------------------------------------------------------------------------
# the channel


@dataclass
class SwitchState:
    mode: str = "nominal_active"  # nominal_active | safety_latched
    latch_tick: Optional[int] = None


class SafetyChannel:
    """Monitors on ground truth; on trigger, latches and executes the safe stop."""

    def __init__(self, channel_id: str, config: MonitorConfig):
        self.channel_id = channel_id
        self.config = config
        self.priority = config.priority
        self.switch = SwitchState()
        self.plan: Optional[SafeStopPlan] = None
        self.last_verdict: Optional[Verdict] = None
        self._grids = GridBuilder(config)

    def step(self, scene: Scene, heartbeat_age: int,
             last_nominal_command: Optional[ChannelCommand],
             tick: int, dt: float) -> Optional[ChannelCommand]:
        if self.switch.mode == "nominal_active":
            grid = self._grids.build(scene)
            verdict = monitor(scene, grid, heartbeat_age, last_nominal_command, self.config)
            self.last_verdict = verdict
            if verdict.status == "ok":
                return None
            self.switch = SwitchState(mode="safety_latched", latch_tick=tick)
            self.plan = plan_safe_stop(scene.ego.speed, self.config)
        # latched: follow the stop profile, then hold the brake
        assert self.plan is not None and self.switch.latch_tick is not None
        ego = scene.ego
        t_next = (tick - self.switch.latch_tick + 1) * dt
        if ego.speed <= 0.0 and t_next > self.plan.stop_time:
            accel = self.config.hold_accel
        else:
            target = self.plan.speed_at(t_next)
            accel = max(-self.config.a_max, min(0.0, (target - ego.speed) / dt))
        return ChannelCommand(self.channel_id, self.priority, accel, 0.0, tick)
