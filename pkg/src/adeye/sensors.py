"""Simulated sensors: typed frames sampled from ground truth with occlusion and noise.

Every sensor instance draws from its own RNG stream (derived from the run seed
and the sensor id), so adding or perturbing one sensor never changes another
sensor's noise sequence. With all sigmas at 0 and detection probability 1,
every sensor is a deterministic function of scene geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .geom import ValidationError, normalize_angle
from .world import Actor, Scene, StaticObstacle, WorldGeometry, ray_cast_fan
from .geom import Circle

TWO_PI = 2.0 * math.pi

SENSOR_PARAM_DEFAULTS: dict[str, dict[str, float]] = {
    "lidar": {"beams": 72, "fov": TWO_PI, "max_range": 50.0, "range_noise_sigma": 0.0},
    "camera": {"fov": math.pi / 2, "max_range": 50.0, "base_detection_prob": 1.0},
    "radar": {
        "fov": math.pi / 2,
        "max_range": 100.0,
        "base_detection_prob": 1.0,
        "range_noise_sigma": 0.0,
        "rate_noise_sigma": 0.0,
    },
    "gps": {"pos_noise_sigma": 0.0},
    "imu": {
        "accel_noise_sigma": 0.0,
        "gyro_noise_sigma": 0.0,
        "accel_bias": 0.0,
        "gyro_bias": 0.0,
    },
    "ultrasonic": {"max_range": 3.0, "beam_width": 0.5, "rays": 7, "range_noise_sigma": 0.0},
}


@dataclass
class SensorConfig:
    id: str
    type: str
    mount: tuple[float, float, float] = (0.0, 0.0, 0.0)  # x, y, heading relative to ego
    rate_divisor: int = 1
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.type not in SENSOR_PARAM_DEFAULTS:
            raise ValidationError(f"sensor {self.id}.type", f"unknown type {self.type!r}")
        if not (isinstance(self.rate_divisor, int) and self.rate_divisor >= 1):
            raise ValidationError(f"sensor {self.id}.rate_divisor", "must be an integer >= 1")
        merged = dict(SENSOR_PARAM_DEFAULTS[self.type])
        for k, v in self.params.items():
            if k not in merged:
                raise ValidationError(f"sensor {self.id}.params.{k}", "unknown parameter")
            merged[k] = v
        self.params = merged
        p = self.params
        for key in ("range_noise_sigma", "rate_noise_sigma", "pos_noise_sigma",
                    "accel_noise_sigma", "gyro_noise_sigma"):
            if key in p and p[key] < 0:
                raise ValidationError(f"sensor {self.id}.params.{key}", "sigma must be >= 0")
        if "fov" in p and not (0.0 < p["fov"] <= TWO_PI + 1e-12):
            raise ValidationError(f"sensor {self.id}.params.fov", f"must be in (0, 2*pi], got {p['fov']}")
        if "max_range" in p and not p["max_range"] > 0:
            raise ValidationError(f"sensor {self.id}.params.max_range", "must be > 0")
        if "base_detection_prob" in p and not (0.0 <= p["base_detection_prob"] <= 1.0):
            raise ValidationError(f"sensor {self.id}.params.base_detection_prob", "must be in [0, 1]")


@dataclass
class LidarScan:
    angles: list[float]  # relative to the sensor boresight
    ranges: list[Optional[float]]  # None = no return


@dataclass
class Detection:
    rel_x: float  # sensor frame, x along boresight
    rel_y: float
    extent: float
    range_rate: Optional[float] = None  # radar only, positive = receding


@dataclass
class ObjectList:
    detections: list[Detection]


@dataclass
class GpsFix:
    x: float
    y: float


@dataclass
class ImuSample:
    accel: float
    yaw_rate: float


@dataclass
class UltrasonicRange:
    range: Optional[float]


Payload = Union[LidarScan, ObjectList, GpsFix, ImuSample, UltrasonicRange]


@dataclass
class SensorFrame:
    sensor_id: str
    tick: int
    payload: Payload


def mount_pose(ego: Actor, config: SensorConfig) -> tuple[float, float, float]:
    mx, my, mh = config.mount
    c, s = math.cos(ego.pose.heading), math.sin(ego.pose.heading)
    return (
        ego.pose.x + c * mx - s * my,
        ego.pose.y + s * mx + c * my,
        normalize_angle(ego.pose.heading + mh),
    )


def beam_angles(fov: float, beams: int) -> np.ndarray:
    """Relative beam angles: full circle wraps without endpoint duplication."""
    beams = int(beams)
    if abs(fov - TWO_PI) < 1e-9:
        return np.arange(beams) * (TWO_PI / beams)
    if beams == 1:
        return np.zeros(1)
    return np.linspace(-fov / 2, fov / 2, beams)


def _scene_geometry(scene: Scene) -> WorldGeometry:
    return WorldGeometry(scene.world, scene.actors)


def sample_lidar(scene: Scene, ego: Actor, config: SensorConfig,
                 rng: np.random.Generator, sigma_scale: float = 1.0) -> LidarScan:
    p = config.params
    sx, sy, sh = mount_pose(ego, config)
    rel = beam_angles(p["fov"], int(p["beams"]))
    geom = _scene_geometry(scene)
    effective = p["max_range"] * scene.environment.visibility
    dists, owners = ray_cast_fan(geom, (sx, sy), rel + sh, effective, exclude=ego.id)
    sigma = p["range_noise_sigma"] * sigma_scale
    ranges: list[Optional[float]] = []
    for d, owner in zip(dists, owners):
        if owner is None:
            ranges.append(None)
        elif sigma > 0:
            ranges.append(max(0.0, float(d) + rng.normal(0.0, sigma)))
        else:
            ranges.append(float(d))
    return LidarScan(angles=[float(a) for a in rel], ranges=ranges)


def _candidates(scene: Scene, ego: Actor):
    """Detectable bodies in deterministic order: obstacles, then non-ego actors."""
    out = []
    for obs in scene.world.obstacles:
        if isinstance(obs.shape, Circle):
            center = (obs.shape.cx, obs.shape.cy)
            extent = obs.shape.radius
        else:
            v = obs.shape.vertices
            center = (float(v[:, 0].mean()), float(v[:, 1].mean()))
            extent = float(np.max(np.hypot(v[:, 0] - center[0], v[:, 1] - center[1])))
        out.append((obs.id, center, extent, (0.0, 0.0)))
    for a in scene.actors.values():
        if a.kind == "ego":
            continue
        vel = (a.speed * math.cos(a.pose.heading), a.speed * math.sin(a.pose.heading))
        extent = 0.5 * math.hypot(a.length, a.width)
        out.append((a.id, (a.pose.x, a.pose.y), extent, vel))
    return out


def _visible(geom: WorldGeometry, origin, target_id: str, center, max_range: float, ego_id: str) -> bool:
    """Line of sight: the first ray hit toward the target center is the target itself."""
    from .world import ray_cast

    dist = math.hypot(center[0] - origin[0], center[1] - origin[1])
    angle = math.atan2(center[1] - origin[1], center[0] - origin[0])
    hit = ray_cast(geom, origin, angle, dist + max_range, exclude=ego_id)
    return hit is not None and hit[1] == target_id


def _object_list(scene: Scene, ego: Actor, config: SensorConfig, rng: np.random.Generator,
                 detection_prob: float, with_range_rate: bool,
                 range_sigma: float = 0.0, rate_sigma: float = 0.0) -> ObjectList:
    p = config.params
    sx, sy, sh = mount_pose(ego, config)
    geom = _scene_geometry(scene)
    ego_vel = (ego.speed * math.cos(ego.pose.heading), ego.speed * math.sin(ego.pose.heading))
    detections: list[Detection] = []
    for body_id, center, extent, vel in _candidates(scene, ego):
        dx, dy = center[0] - sx, center[1] - sy
        dist = math.hypot(dx, dy)
        if dist > p["max_range"] or dist == 0.0:
            continue
        bearing = normalize_angle(math.atan2(dy, dx) - sh)
        if abs(bearing) > p["fov"] / 2:
            continue
        if not _visible(geom, (sx, sy), body_id, center, p["max_range"], ego.id):
            continue
        if detection_prob < 1.0 and rng.random() >= detection_prob:
            continue
        noisy_dist = dist
        if range_sigma > 0:
            noisy_dist = max(0.0, dist + rng.normal(0.0, range_sigma))
        scale = noisy_dist / dist
        c, s = math.cos(-sh), math.sin(-sh)
        rel_x = (c * dx - s * dy) * scale
        rel_y = (s * dx + c * dy) * scale
        range_rate = None
        if with_range_rate:
            ux, uy = dx / dist, dy / dist
            range_rate = (vel[0] - ego_vel[0]) * ux + (vel[1] - ego_vel[1]) * uy
            if rate_sigma > 0:
                range_rate += rng.normal(0.0, rate_sigma)
        detections.append(Detection(rel_x, rel_y, extent, range_rate))
    return ObjectList(detections)


def sample_camera(scene: Scene, ego: Actor, config: SensorConfig,
                  rng: np.random.Generator, sigma_scale: float = 1.0) -> ObjectList:
    env = scene.environment
    prob = config.params["base_detection_prob"] * env.visibility * env.light
    return _object_list(scene, ego, config, rng, prob, with_range_rate=False)


def sample_radar(scene: Scene, ego: Actor, config: SensorConfig,
                 rng: np.random.Generator, sigma_scale: float = 1.0) -> ObjectList:
    # radar sees through poor visibility/light
    p = config.params
    return _object_list(
        scene, ego, config, rng, p["base_detection_prob"], with_range_rate=True,
        range_sigma=p["range_noise_sigma"] * sigma_scale,
        rate_sigma=p["rate_noise_sigma"] * sigma_scale,
    )


def sample_gps(scene: Scene, ego: Actor, config: SensorConfig,
               rng: np.random.Generator, sigma_scale: float = 1.0) -> GpsFix:
    sigma = config.params["pos_noise_sigma"] * sigma_scale
    x, y = ego.pose.x, ego.pose.y
    if sigma > 0:
        x += rng.normal(0.0, sigma)
        y += rng.normal(0.0, sigma)
    return GpsFix(x, y)


def sample_imu(scene: Scene, ego: Actor, config: SensorConfig,
               rng: np.random.Generator, sigma_scale: float = 1.0) -> ImuSample:
    p = config.params
    accel = ego.accel + p["accel_bias"]
    yaw_rate = (ego.speed / ego.wheelbase) * math.tan(ego.steer) + p["gyro_bias"]
    if p["accel_noise_sigma"] * sigma_scale > 0:
        accel += rng.normal(0.0, p["accel_noise_sigma"] * sigma_scale)
    if p["gyro_noise_sigma"] * sigma_scale > 0:
        yaw_rate += rng.normal(0.0, p["gyro_noise_sigma"] * sigma_scale)
    return ImuSample(accel, yaw_rate)


def sample_ultrasonic(scene: Scene, ego: Actor, config: SensorConfig,
                      rng: np.random.Generator, sigma_scale: float = 1.0) -> UltrasonicRange:
    p = config.params
    sx, sy, sh = mount_pose(ego, config)
    rel = beam_angles(p["beam_width"], int(p["rays"]))
    geom = _scene_geometry(scene)
    dists, owners = ray_cast_fan(geom, (sx, sy), rel + sh, p["max_range"], exclude=ego.id)
    best = None
    for d, owner in zip(dists, owners):
        if owner is not None and (best is None or d < best):
            best = float(d)
    if best is None:
        return UltrasonicRange(None)
    sigma = p["range_noise_sigma"] * sigma_scale
    if sigma > 0:
        best = max(0.0, best + rng.normal(0.0, sigma))
    return UltrasonicRange(best)


SAMPLERS = {
    "lidar": sample_lidar,
    "camera": sample_camera,
    "radar": sample_radar,
    "gps": sample_gps,
    "imu": sample_imu,
    "ultrasonic": sample_ultrasonic,
}


def sample(scene: Scene, ego: Actor, config: SensorConfig,
           rng: np.random.Generator, sigma_scale: float = 1.0) -> SensorFrame:
    payload = SAMPLERS[config.type](scene, ego, config, rng, sigma_scale)
    return SensorFrame(sensor_id=config.id, tick=scene.tick, payload=payload)


def route(frames: list[SensorFrame], table: dict[str, list[str]],
          channel_ids: list[str]) -> dict[str, list[SensorFrame]]:
    """Deliver each frame to exactly the channels its sensor id maps to."""
    out: dict[str, list[SensorFrame]] = {cid: [] for cid in channel_ids}
    for frame in frames:
        if frame.sensor_id not in table:
            raise ValidationError(f"routing.{frame.sensor_id}", "frame from undeclared sensor")
        for cid in table[frame.sensor_id]:
            out[cid].append(frame)
    return out
