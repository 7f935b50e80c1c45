"""2D world: static geometry, lanes, actor kinematics and ground-truth snapshots."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import kernels
from .geom import (
    Circle,
    ConvexPolygon,
    Pose2D,
    ValidationError,
    circle_polygon_distance,
    circle_polygon_overlap,
    convex_polygon_distance,
    convex_polygons_overlap,
    normalize_angle,
    polygon_segments,
    rect_corners,
)

GRAVITY = 9.81

OBSTACLE_KINDS = ("building", "tree", "barrier", "other")
ACTOR_KINDS = ("ego", "vehicle", "pedestrian")

# scripted-actor regulation constants
COMFORT_ACCEL = 3.0
PEDESTRIAN_YAW_RATE_MAX = 3.0


@dataclass
class Environment:
    friction: float = 1.0
    visibility: float = 1.0
    light: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.friction <= 1.5):
            raise ValidationError("environment.friction", f"must be in (0, 1.5], got {self.friction}")
        if not (0.0 < self.visibility <= 1.0):
            raise ValidationError("environment.visibility", f"must be in (0, 1], got {self.visibility}")
        if not (0.0 < self.light <= 1.0):
            raise ValidationError("environment.light", f"must be in (0, 1], got {self.light}")


@dataclass
class StaticObstacle:
    id: str
    shape: Union[Circle, ConvexPolygon]
    kind: str = "other"

    def __post_init__(self):
        if self.kind not in OBSTACLE_KINDS:
            raise ValidationError(f"obstacle {self.id}.kind", f"unknown kind {self.kind!r}")


@dataclass
class Lane:
    id: str
    centerline: np.ndarray  # (n, 2)
    width: float = 3.5
    successors: list[str] = field(default_factory=list)

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValidationError(f"lane {self.id}.centerline", "needs >= 2 2D points")
        if np.any(np.hypot(*np.diff(pts, axis=0).T) == 0):
            raise ValidationError(f"lane {self.id}.centerline", "consecutive points must be distinct")
        if not self.width > 0:
            raise ValidationError(f"lane {self.id}.width", f"must be > 0, got {self.width}")
        self.centerline = pts


@dataclass
class Waypoint:
    x: float
    y: float
    speed: float = 0.0


@dataclass
class Actor:
    id: str
    kind: str
    pose: Pose2D
    speed: float = 0.0
    accel: float = 0.0
    steer: float = 0.0
    length: float = 4.5
    width: float = 1.8
    wheelbase: float = 2.7
    steer_max: float = 0.6
    capture_radius: float = 2.0
    script: list[Waypoint] = field(default_factory=list)
    script_index: int = 0

    def __post_init__(self):
        if self.kind not in ACTOR_KINDS:
            raise ValidationError(f"actor {self.id}.kind", f"unknown kind {self.kind!r}")
        if self.speed < 0:
            raise ValidationError(f"actor {self.id}.speed", "must be >= 0")

    def footprint(self) -> np.ndarray:
        return rect_corners(self.pose.x, self.pose.y, self.pose.heading, self.length, self.width)


@dataclass
class World:
    obstacles: list[StaticObstacle]
    lanes: list[Lane]
    actors: list[Actor]
    environment: Environment
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValidationError("bounds", f"degenerate bounds {self.bounds}")
        for group, items in (("obstacle", self.obstacles), ("lane", self.lanes), ("actor", self.actors)):
            seen = set()
            for item in items:
                if item.id in seen:
                    raise ValidationError(f"{group}.{item.id}", "duplicate id")
                seen.add(item.id)
        egos = [a for a in self.actors if a.kind == "ego"]
        if len(egos) != 1:
            raise ValidationError("actors", f"exactly one ego required, found {len(egos)}")
        lane_ids = {ln.id for ln in self.lanes}
        for ln in self.lanes:
            for s in ln.successors:
                if s not in lane_ids:
                    raise ValidationError(f"lane {ln.id}.successors", f"unknown lane id {s!r}")
        for a in self.actors:
            if not (xmin <= a.pose.x <= xmax and ymin <= a.pose.y <= ymax):
                raise ValidationError(f"actor {a.id}", "pose outside world bounds")

    @property
    def ego(self) -> Actor:
        return next(a for a in self.actors if a.kind == "ego")


@dataclass
class Scene:
    """Ground-truth snapshot at one tick: exact copies, no noise, no occlusion."""

    tick: int
    time: float
    actors: dict[str, Actor]
    environment: Environment
    world: World  # static reference (obstacles, lanes, bounds)

    @property
    def ego(self) -> Actor:
        return next(a for a in self.actors.values() if a.kind == "ego")


# ---------------------------------------------------------------------------
# kinematics


def step_actor(actor: Actor, accel: float, steer: float, dt: float, env: Environment) -> Actor:
    """Kinematic bicycle step; friction caps |accel| at mu*g, speed clamps at 0.

    Pedestrians can turn in place: their steer input is a yaw rate in rad/s.
    """
    if dt <= 0:
        raise ValidationError("dt", f"must be > 0, got {dt}")
    if not math.isfinite(accel):
        raise ValidationError("accel", f"must be finite, got {accel}")
    if not math.isfinite(steer):
        raise ValidationError("steer", f"must be finite, got {steer}")

    if actor.kind == "pedestrian":
        heading = normalize_angle(actor.pose.heading + steer * dt)
    else:
        steer = max(-actor.steer_max, min(actor.steer_max, steer))
        heading = normalize_angle(
            actor.pose.heading + (actor.speed / actor.wheelbase) * math.tan(steer) * dt
        )
    x = actor.pose.x + actor.speed * math.cos(heading) * dt
    y = actor.pose.y + actor.speed * math.sin(heading) * dt
    cap = env.friction * GRAVITY
    realized = max(-cap, min(cap, accel))
    speed = max(0.0, actor.speed + realized * dt)
    return replace(actor, pose=Pose2D(x, y, heading), speed=speed, accel=realized, steer=steer)


def advance_scripted(actor: Actor, dt: float, env: Environment) -> Actor:
    """Advance a non-ego actor along its waypoint script (pure pursuit + speed regulation)."""
    if actor.kind == "ego":
        raise ValidationError("actor", "ego is driven by channels, not scripts")
    idx = actor.script_index
    while idx < len(actor.script):
        wp = actor.script[idx]
        if math.hypot(wp.x - actor.pose.x, wp.y - actor.pose.y) < actor.capture_radius:
            idx += 1
        else:
            break
    if idx >= len(actor.script):
        # script exhausted (or empty): brake to rest and hold
        accel = max(-COMFORT_ACCEL, min(0.0, -actor.speed / dt))
        stepped = step_actor(actor, accel, 0.0, dt, env)
        return replace(stepped, script_index=idx)

    wp = actor.script[idx]
    alpha = normalize_angle(math.atan2(wp.y - actor.pose.y, wp.x - actor.pose.x) - actor.pose.heading)
    if actor.kind == "pedestrian":
        steer = max(-PEDESTRIAN_YAW_RATE_MAX, min(PEDESTRIAN_YAW_RATE_MAX, alpha / dt))
    elif abs(alpha) > math.pi / 2:
        # target behind: pure pursuit degenerates, turn hard toward it
        steer = math.copysign(actor.steer_max, alpha)
    else:
        lookahead = max(1e-6, math.hypot(wp.x - actor.pose.x, wp.y - actor.pose.y))
        steer = math.atan(2.0 * actor.wheelbase * math.sin(alpha) / lookahead)
    accel = max(-COMFORT_ACCEL, min(COMFORT_ACCEL, (wp.speed - actor.speed) / dt))
    stepped = step_actor(actor, accel, steer, dt, env)
    return replace(stepped, script_index=idx)


def clamp_to_bounds(actor: Actor, bounds) -> tuple[Actor, bool]:
    """Keep an actor inside world bounds; a clamped actor stops dead."""
    xmin, ymin, xmax, ymax = bounds
    x = min(max(actor.pose.x, xmin), xmax)
    y = min(max(actor.pose.y, ymin), ymax)
    if x == actor.pose.x and y == actor.pose.y:
        return actor, False
    return replace(actor, pose=Pose2D(x, y, actor.pose.heading), speed=0.0), True


# ---------------------------------------------------------------------------
# ray casting


class WorldGeometry:
    """World flattened to kernel arrays with an owner-code registry."""

    def __init__(self, world: World, actors: Optional[dict[str, Actor]] = None):
        circles = []
        circle_owner = []
        segs = []
        seg_owner = []
        self.owner_ids: list[str] = []

        def code_for(body_id: str) -> int:
            self.owner_ids.append(body_id)
            return len(self.owner_ids) - 1

        for obs in world.obstacles:
            code = code_for(obs.id)
            if isinstance(obs.shape, Circle):
                circles.append([obs.shape.cx, obs.shape.cy, obs.shape.radius])
                circle_owner.append(code)
            else:
                for seg in polygon_segments(obs.shape.vertices):
                    segs.append(list(seg))
                    seg_owner.append(code)
        actor_list = list(actors.values()) if actors is not None else world.actors
        for a in actor_list:
            code = code_for(a.id)
            for seg in polygon_segments(a.footprint()):
                segs.append(list(seg))
                seg_owner.append(code)

        self.circles = np.array(circles, dtype=float).reshape(-1, 3)
        self.circle_owner = np.array(circle_owner, dtype=np.int64)
        self.segs = np.array(segs, dtype=float).reshape(-1, 4)
        self.seg_owner = np.array(seg_owner, dtype=np.int64)
        self._code_by_id = {bid: i for i, bid in enumerate(self.owner_ids)}

    def code(self, body_id: Optional[str]) -> int:
        if body_id is None:
            return kernels.NO_HIT
        return self._code_by_id.get(body_id, kernels.NO_HIT)


def ray_cast(
    geom: WorldGeometry,
    origin: tuple[float, float],
    angle: float,
    max_range: float,
    exclude: Optional[str] = None,
):
    """Nearest intersection along one ray; returns (distance, body id) or None on miss."""
    if max_range <= 0:
        raise ValidationError("max_range", f"must be > 0, got {max_range}")
    dist, owner = kernels.raycast_one(
        origin[0],
        origin[1],
        angle,
        max_range,
        geom.circles,
        geom.circle_owner,
        geom.segs,
        geom.seg_owner,
        geom.code(exclude),
    )
    if owner == kernels.NO_HIT:
        return None
    return dist, geom.owner_ids[owner]


def ray_cast_fan(geom: WorldGeometry, origin, angles, max_range: float, exclude=None):
    """Batched first-hit query; returns (distances, owner ids list with None for misses)."""
    dists, owners = kernels.raycast_batch(
        origin[0],
        origin[1],
        np.asarray(angles, dtype=float),
        max_range,
        geom.circles,
        geom.circle_owner,
        geom.segs,
        geom.seg_owner,
        geom.code(exclude),
    )
    ids = [geom.owner_ids[o] if o != kernels.NO_HIT else None for o in owners]
    return dists, ids


# ---------------------------------------------------------------------------
# snapshots and clearance


def ground_truth(world: World, tick: int, dt: float) -> Scene:
    """Exact copy of all dynamic state at this tick."""
    return Scene(
        tick=tick,
        time=tick * dt,
        actors={a.id: copy.deepcopy(a) for a in world.actors},
        environment=world.environment,
        world=world,
    )


def body_distance(footprint: np.ndarray, obstacle_or_actor) -> float:
    """Distance from an oriented-rectangle footprint to another body (0 on overlap)."""
    other = obstacle_or_actor
    if isinstance(other, StaticObstacle):
        if isinstance(other.shape, Circle):
            return circle_polygon_distance(other.shape.cx, other.shape.cy, other.shape.radius, footprint)
        return convex_polygon_distance(footprint, other.shape.vertices)
    return convex_polygon_distance(footprint, other.footprint())


def bodies_overlap(footprint: np.ndarray, obstacle_or_actor) -> bool:
    other = obstacle_or_actor
    if isinstance(other, StaticObstacle):
        if isinstance(other.shape, Circle):
            return circle_polygon_overlap(other.shape.cx, other.shape.cy, other.shape.radius, footprint)
        return convex_polygons_overlap(footprint, other.shape.vertices)
    return convex_polygons_overlap(footprint, other.footprint())


def ego_clearance(scene: Scene) -> float:
    """Min distance from the ego footprint to any other body; inf when alone."""
    ego = scene.ego
    fp = ego.footprint()
    best = math.inf
    for obs in scene.world.obstacles:
        best = min(best, body_distance(fp, obs))
    for a in scene.actors.values():
        if a.kind != "ego":
            best = min(best, body_distance(fp, a))
    return best


def ego_collides(scene: Scene) -> Optional[str]:
    """Id of the first body overlapping the ego footprint, else None."""
    ego = scene.ego
    fp = ego.footprint()
    for obs in scene.world.obstacles:
        if bodies_overlap(fp, obs):
            return obs.id
    for a in scene.actors.values():
        if a.kind != "ego" and bodies_overlap(fp, a):
            return a.id
    return None
