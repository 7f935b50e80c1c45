"""Scenario database: strict-JSON parsing, ASCII worlds, and combinatorial sweeps.

Documents are a strict subset of JSON: UTF-8, no duplicate keys, no
NaN/Infinity, unknown keys rejected. Parsing applies all documented defaults;
``serialize_scenario`` emits the fully-defaulted canonical form, so
parse -> serialize -> parse is the identity and golden files are diffable.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

from .faults import CHANNEL_FAULT_KINDS, FaultSpec
from .geom import Circle, ConvexPolygon, Pose2D, ValidationError
from .nominal import NominalConfig
from .safety import MonitorConfig
from .sensors import SensorConfig
from .world import Actor, Environment, Lane, StaticObstacle, Waypoint, World

FORMAT_VERSION = 1
DEFAULT_DT = 0.01
DEFAULT_BOUNDS = [-100.0, -100.0, 100.0, 100.0]
SWEEP_CAP = 100000

MASK64 = (1 << 64) - 1


def mix64(seed: int, k: int) -> int:
    """Splitmix-style mix of (seed, k); the documented derived-seed function."""
    z = (seed + (k + 1) * 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_seed(run_seed: int, stream_id: str) -> int:
    """Per-sensor RNG stream seed derived from (run seed, stream id)."""
    digest = hashlib.sha256(stream_id.encode("utf-8")).digest()
    return mix64(run_seed, int.from_bytes(digest[:8], "big"))


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _reject_dupes(pairs):
    d = {}
    for k, v in pairs:
        if k in d:
            raise ScenarioError(k, "duplicate key")
        d[k] = v
    return d


def _reject_constant(name):
    raise ScenarioError("document", f"non-finite number {name} not allowed")


class _Obj:
    """Strict dict reader: typed takes, required keys, unknown-key rejection."""

    def __init__(self, data: dict, path: str):
        if not isinstance(data, dict):
            raise ScenarioError(path, f"expected an object, got {type(data).__name__}")
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _get(self, key, default, required):
        self.seen.add(key)
        if key not in self.data:
            if required:
                raise ScenarioError(f"{self.path}.{key}", "missing required key")
            return default
        return self.data[key]

    def number(self, key, default=None, required=False) -> float:
        v = self._get(key, default, required)
        if v is default and key not in self.data:
            return default
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ScenarioError(f"{self.path}.{key}", f"expected a number, got {v!r}")
        if not math.isfinite(v):
            raise ScenarioError(f"{self.path}.{key}", "number must be finite")
        return v

    def integer(self, key, default=None, required=False) -> int:
        v = self._get(key, default, required)
        if v is default and key not in self.data:
            return default
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(f"{self.path}.{key}", f"expected an integer, got {v!r}")
        return v

    def string(self, key, default=None, required=False) -> str:
        v = self._get(key, default, required)
        if v is default and key not in self.data:
            return default
        if v is None and not required:
            # explicit null on an optional key means "use the default"
            return default
        if not isinstance(v, str):
            raise ScenarioError(f"{self.path}.{key}", f"expected a string, got {v!r}")
        return v

    def boolean(self, key, default=None, required=False) -> bool:
        v = self._get(key, default, required)
        if v is default and key not in self.data:
            return default
        if not isinstance(v, bool):
            raise ScenarioError(f"{self.path}.{key}", f"expected a boolean, got {v!r}")
        return v

    def obj(self, key, default=None, required=False) -> Optional["_Obj"]:
        v = self._get(key, default, required)
        if v is default and key not in self.data:
            v = {} if default is None and not required else default
            if v is None:
                return None
        return _Obj(v, f"{self.path}.{key}")

    def array(self, key, default=None, required=False) -> list:
        v = self._get(key, default, required)
        if v is default and key not in self.data:
            return [] if default is None else default
        if not isinstance(v, list):
            raise ScenarioError(f"{self.path}.{key}", f"expected an array, got {v!r}")
        return v

    def raw(self, key, default=None):
        return self._get(key, default, False)

    def finish(self):
        unknown = set(self.data) - self.seen
        if unknown:
            raise ScenarioError(f"{self.path}.{sorted(unknown)[0]}", "unknown key")


def _point(v, path) -> list[float]:
    if (not isinstance(v, list)) or len(v) != 2 or any(
        isinstance(c, bool) or not isinstance(c, (int, float)) for c in v
    ):
        raise ScenarioError(path, f"expected [x, y], got {v!r}")
    return [float(v[0]), float(v[1])]


# ---------------------------------------------------------------------------
# ASCII worlds

ASCII_OBSTACLE = "#"
ASCII_FREE = "."
ASCII_LANE_H = "-"
ASCII_LANE_V = "|"
ASCII_LANE_WIDTH = 3.5


def parse_ascii_world(text: str) -> tuple[list[StaticObstacle], list[Lane], list[float]]:
    """Grid legend: '#' 1x1 m obstacle, '.' free, '-'/'|' lane cells.

    Obstacle cells are merged greedily into maximal axis-aligned rectangles.
    Row 0 is the top of the grid; y grows upward.
    """
    rows = text.split("\n")
    if rows and rows[-1] == "":
        rows = rows[:-1]
    if not rows:
        raise ScenarioError("world.ascii", "empty grid")
    width = len(rows[0])
    if width == 0:
        raise ScenarioError("world.ascii", "empty grid row")
    for r, row in enumerate(rows):
        if len(row) != width:
            raise ScenarioError("world.ascii", f"ragged row {r}: length {len(row)} != {width}")
        for c, ch in enumerate(row):
            if ch not in (ASCII_OBSTACLE, ASCII_FREE, ASCII_LANE_H, ASCII_LANE_V):
                raise ScenarioError("world.ascii", f"unknown character {ch!r} at row {r}, column {c}")
    height = len(rows)

    def cell_y(r: int) -> float:  # bottom edge of the square in row r
        return float(height - 1 - r)

    obstacles: list[StaticObstacle] = []
    visited = [[False] * width for _ in range(height)]
    for r in range(height):
        for c in range(width):
            if rows[r][c] != ASCII_OBSTACLE or visited[r][c]:
                continue
            w = 1
            while c + w < width and rows[r][c + w] == ASCII_OBSTACLE and not visited[r][c + w]:
                w += 1
            h = 1
            while r + h < height and all(
                rows[r + h][cc] == ASCII_OBSTACLE and not visited[r + h][cc]
                for cc in range(c, c + w)
            ):
                h += 1
            for rr in range(r, r + h):
                for cc in range(c, c + w):
                    visited[rr][cc] = True
            x0, x1 = float(c), float(c + w)
            y1 = cell_y(r) + 1.0
            y0 = cell_y(r + h - 1)
            verts = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
            obstacles.append(
                StaticObstacle(id=f"block_{len(obstacles)}", shape=ConvexPolygon(verts), kind="building")
            )

    lanes: list[Lane] = []
    for r in range(height):
        c = 0
        while c < width:
            if rows[r][c] == ASCII_LANE_H:
                c0 = c
                while c < width and rows[r][c] == ASCII_LANE_H:
                    c += 1
                yc = cell_y(r) + 0.5
                lanes.append(
                    Lane(
                        id=f"lane_h{len(lanes)}",
                        centerline=np.array([[float(c0), yc], [float(c), yc]]),
                        width=ASCII_LANE_WIDTH,
                    )
                )
            else:
                c += 1
    for c in range(width):
        r = 0
        while r < height:
            if rows[r][c] == ASCII_LANE_V:
                r0 = r
                while r < height and rows[r][c] == ASCII_LANE_V:
                    r += 1
                xc = float(c) + 0.5
                lanes.append(
                    Lane(
                        id=f"lane_v{len(lanes)}",
                        centerline=np.array([[xc, cell_y(r - 1)], [xc, cell_y(r0) + 1.0]]),
                        width=ASCII_LANE_WIDTH,
                    )
                )
            else:
                r += 1
    bounds = [0.0, 0.0, float(width), float(height)]
    return obstacles, lanes, bounds


# ---------------------------------------------------------------------------
# document sections


def _parse_shape(o: _Obj):
    kind = o.string("type", required=True)
    if kind == "circle":
        center = _point(o.raw("center"), f"{o.path}.center")
        o.seen.add("center")
        radius = o.number("radius", required=True)
        o.finish()
        try:
            return Circle(center[0], center[1], radius)
        except ValidationError as e:
            raise ScenarioError(o.path, str(e))
    if kind == "polygon":
        verts = [_point(v, f"{o.path}.vertices[{i}]") for i, v in enumerate(o.array("vertices", required=True))]
        o.finish()
        try:
            return ConvexPolygon(np.array(verts))
        except ValidationError as e:
            raise ScenarioError(o.path, str(e))
    raise ScenarioError(f"{o.path}.type", f"unknown shape type {kind!r}")


def _shape_doc(shape) -> dict:
    if isinstance(shape, Circle):
        return {"type": "circle", "center": [shape.cx, shape.cy], "radius": shape.radius}
    return {"type": "polygon", "vertices": [[float(x), float(y)] for x, y in shape.vertices]}


def _parse_state(o: _Obj) -> dict:
    out = {
        "x": float(o.number("x", 0.0)),
        "y": float(o.number("y", 0.0)),
        "heading": float(o.number("heading", 0.0)),
        "speed": float(o.number("speed", 0.0)),
    }
    o.finish()
    if out["speed"] < 0:
        raise ScenarioError(f"{o.path}.speed", "must be >= 0")
    return out


_EGO_PARAM_DEFAULTS = {"length": 4.5, "width": 1.8, "wheelbase": 2.7, "steer_max": 0.6}
_ACTOR_PARAM_DEFAULTS = {"wheelbase": 2.7, "steer_max": 0.6, "capture_radius": 2.0}
_FOOTPRINT_DEFAULTS = {"vehicle": (4.5, 1.8), "pedestrian": (0.5, 0.5)}


def _parse_params(o: _Obj, defaults: dict) -> dict:
    out = {}
    for key, dv in defaults.items():
        out[key] = float(o.number(key, dv))
    o.finish()
    return out


@dataclass
class ChannelSpec:
    id: str
    type: str  # nominal | safety
    priority: int


@dataclass
class Termination:
    max_time: float = 10.0
    stop_on_collision: bool = True
    goal: Optional[tuple[float, float, float]] = None  # x, y, radius


@dataclass
class SweepVariable:
    path: str
    values: list


@dataclass
class ScenarioSpec:
    doc: dict  # canonical fully-defaulted document
    name: str
    seed: int
    dt: float
    world: World
    sensors: list[SensorConfig]
    routing: dict[str, list[str]]
    channels: list[ChannelSpec]
    staleness_ticks: int
    nominal_config: NominalConfig
    safety_config: MonitorConfig
    faults: list[FaultSpec]
    sweep: list[SweepVariable]
    termination: Termination
    acceptance: dict


@dataclass
class RunManifest:
    run_id: int
    seed: int
    spec: ScenarioSpec


@dataclass
class SweepPlan:
    scenario_name: str
    runs: list[RunManifest]


def parse_scenario(text: str) -> ScenarioSpec:
    try:
        data = json.loads(text, object_pairs_hook=_reject_dupes, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ScenarioError("document", f"syntax error at line {e.lineno}, column {e.colno}: {e.msg}")
    return parse_scenario_doc(data)


def parse_scenario_doc(data: dict) -> ScenarioSpec:
    root = _Obj(data, "scenario")
    version = root.integer("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise ScenarioError("scenario.format_version", f"unsupported version {version}")
    name = root.string("name", required=True)
    seed = root.integer("seed", 0)
    if not (0 <= seed <= MASK64):
        raise ScenarioError("scenario.seed", "must be a 64-bit unsigned integer")
    dt = float(root.number("dt", DEFAULT_DT))
    if dt <= 0:
        raise ScenarioError("scenario.dt", "must be > 0")

    # --- world
    wobj = root.obj("world")
    ascii_text = wobj.string("ascii", None)
    if ascii_text is not None:
        wobj.finish()
        obstacles, lanes, bounds = parse_ascii_world(ascii_text)
        world_doc: dict = {"ascii": ascii_text}
    else:
        bounds_raw = wobj.array("bounds", list(DEFAULT_BOUNDS))
        if len(bounds_raw) != 4:
            raise ScenarioError("scenario.world.bounds", "expected [xmin, ymin, xmax, ymax]")
        bounds = [float(b) for b in bounds_raw]
        obstacles = []
        for i, od in enumerate(wobj.array("obstacles")):
            oo = _Obj(od, f"scenario.world.obstacles[{i}]")
            oid = oo.string("id", required=True)
            okind = oo.string("kind", "other")
            shape = _parse_shape(oo.obj("shape", required=True))
            oo.finish()
            try:
                obstacles.append(StaticObstacle(id=oid, shape=shape, kind=okind))
            except ValidationError as e:
                raise ScenarioError(oo.path, str(e))
        lanes = []
        for i, ld in enumerate(wobj.array("lanes")):
            lo = _Obj(ld, f"scenario.world.lanes[{i}]")
            lid = lo.string("id", required=True)
            pts = [_point(p, f"{lo.path}.centerline[{k}]") for k, p in enumerate(lo.array("centerline", required=True))]
            lwidth = float(lo.number("width", ASCII_LANE_WIDTH))
            succ = lo.array("successors")
            lo.finish()
            if not all(isinstance(s, str) for s in succ):
                raise ScenarioError(f"{lo.path}.successors", "expected lane id strings")
            try:
                lanes.append(Lane(id=lid, centerline=np.array(pts), width=lwidth, successors=list(succ)))
            except ValidationError as e:
                raise ScenarioError(lo.path, str(e))
        wobj.finish()
        world_doc = {
            "bounds": bounds,
            "obstacles": [
                {"id": ob.id, "kind": ob.kind, "shape": _shape_doc(ob.shape)} for ob in obstacles
            ],
            "lanes": [
                {
                    "id": ln.id,
                    "centerline": [[float(x), float(y)] for x, y in ln.centerline],
                    "width": ln.width,
                    "successors": list(ln.successors),
                }
                for ln in lanes
            ],
        }

    # --- environment
    eobj = root.obj("environment")
    env_doc = {
        "friction": float(eobj.number("friction", 1.0)),
        "visibility": float(eobj.number("visibility", 1.0)),
        "light": float(eobj.number("light", 1.0)),
    }
    eobj.finish()
    try:
        environment = Environment(**env_doc)
    except ValidationError as e:
        raise ScenarioError("scenario.environment", str(e))

    # --- ego
    gobj = root.obj("ego", required=True)
    ego_state = _parse_state(gobj.obj("state", required=True))
    ego_params = _parse_params(gobj.obj("params"), _EGO_PARAM_DEFAULTS)
    gobj.finish()
    try:
        ego = Actor(
            id="ego",
            kind="ego",
            pose=Pose2D(ego_state["x"], ego_state["y"], ego_state["heading"]),
            speed=ego_state["speed"],
            length=ego_params["length"],
            width=ego_params["width"],
            wheelbase=ego_params["wheelbase"],
            steer_max=ego_params["steer_max"],
        )
    except ValidationError as e:
        raise ScenarioError("scenario.ego", str(e))

    # --- actors
    actors = [ego]
    actors_doc = []
    seen_actor_ids = {"ego"}
    for i, ad in enumerate(root.array("actors")):
        ao = _Obj(ad, f"scenario.actors[{i}]")
        aid = ao.string("id", required=True)
        if aid in seen_actor_ids:
            raise ScenarioError(ao.path, f"duplicate actor id {aid!r}")
        seen_actor_ids.add(aid)
        akind = ao.string("kind", "vehicle")
        if akind not in ("vehicle", "pedestrian"):
            raise ScenarioError(f"{ao.path}.kind", f"must be vehicle or pedestrian, got {akind!r}")
        astate = _parse_state(ao.obj("state", required=True))
        fobj = ao.obj("footprint")
        dl, dw = _FOOTPRINT_DEFAULTS[akind]
        foot = {"length": float(fobj.number("length", dl)), "width": float(fobj.number("width", dw))}
        fobj.finish()
        aparams = _parse_params(ao.obj("params"), _ACTOR_PARAM_DEFAULTS)
        script = []
        for k, wd in enumerate(ao.array("script")):
            wo = _Obj(wd, f"{ao.path}.script[{k}]")
            script.append(
                {
                    "x": float(wo.number("x", required=True)),
                    "y": float(wo.number("y", required=True)),
                    "speed": float(wo.number("speed", 0.0)),
                }
            )
            wo.finish()
        ao.finish()
        try:
            actors.append(
                Actor(
                    id=aid,
                    kind=akind,
                    pose=Pose2D(astate["x"], astate["y"], astate["heading"]),
                    speed=astate["speed"],
                    length=foot["length"],
                    width=foot["width"],
                    wheelbase=aparams["wheelbase"],
                    steer_max=aparams["steer_max"],
                    capture_radius=aparams["capture_radius"],
                    script=[Waypoint(**w) for w in script],
                )
            )
        except ValidationError as e:
            raise ScenarioError(ao.path, str(e))
        actors_doc.append(
            {"id": aid, "kind": akind, "state": astate, "footprint": foot, "params": aparams, "script": script}
        )

    try:
        world = World(obstacles=obstacles, lanes=lanes, actors=actors,
                      environment=environment, bounds=tuple(bounds))
    except ValidationError as e:
        raise ScenarioError("scenario.world", str(e))

    # --- sensors
    sensors = []
    sensors_doc = []
    seen_sensor_ids = set()
    for i, sd in enumerate(root.array("sensors")):
        so = _Obj(sd, f"scenario.sensors[{i}]")
        sid = so.string("id", required=True)
        if sid in seen_sensor_ids:
            raise ScenarioError(so.path, f"duplicate sensor id {sid!r}")
        seen_sensor_ids.add(sid)
        stype = so.string("type", required=True)
        mobj = so.obj("mount")
        mount = (
            float(mobj.number("x", 0.0)),
            float(mobj.number("y", 0.0)),
            float(mobj.number("heading", 0.0)),
        )
        mobj.finish()
        divisor = so.integer("rate_divisor", 1)
        pobj = so.obj("params")
        raw_params = dict(pobj.data)
        pobj.seen.update(raw_params)
        so.finish()
        try:
            cfg = SensorConfig(id=sid, type=stype, mount=mount, rate_divisor=divisor, params=raw_params)
        except ValidationError as e:
            raise ScenarioError(so.path, str(e))
        sensors.append(cfg)
        sensors_doc.append(
            {
                "id": sid,
                "type": stype,
                "mount": {"x": mount[0], "y": mount[1], "heading": mount[2]},
                "rate_divisor": divisor,
                "params": {k: cfg.params[k] for k in sorted(cfg.params)},
            }
        )

    # --- channels
    channels = []
    channels_doc = []
    raw_channels = root.array(
        "channels",
        [
            {"id": "nominal", "type": "nominal", "priority": 1},
            {"id": "safety", "type": "safety", "priority": 10},
        ],
    )
    seen_channel_ids = set()
    for i, cd in enumerate(raw_channels):
        co = _Obj(cd, f"scenario.channels[{i}]")
        cid = co.string("id", required=True)
        if cid in seen_channel_ids:
            raise ScenarioError(co.path, f"duplicate channel id {cid!r}")
        seen_channel_ids.add(cid)
        ctype = co.string("type", required=True)
        if ctype not in ("nominal", "safety"):
            raise ScenarioError(f"{co.path}.type", f"must be nominal or safety, got {ctype!r}")
        prio = co.integer("priority", 1 if ctype == "nominal" else 10)
        co.finish()
        channels.append(ChannelSpec(id=cid, type=ctype, priority=prio))
        channels_doc.append({"id": cid, "type": ctype, "priority": prio})

    # --- routing
    robj = root.obj("routing")
    routing = {}
    for sid in robj.data:
        robj.seen.add(sid)
        if sid not in seen_sensor_ids:
            raise ScenarioError(f"scenario.routing.{sid}", "unknown sensor id")
        targets = robj.data[sid]
        if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
            raise ScenarioError(f"scenario.routing.{sid}", "expected an array of channel ids")
        for t in targets:
            if t not in seen_channel_ids:
                raise ScenarioError(f"scenario.routing.{sid}", f"unknown channel id {t!r}")
        routing[sid] = list(targets)
    robj.finish()
    # sensors without an explicit route feed every sensor-consuming (nominal) channel
    nominal_ids = [c.id for c in channels if c.type == "nominal"]
    for sid in seen_sensor_ids:
        routing.setdefault(sid, list(nominal_ids))
    routing_doc = {sd["id"]: routing[sd["id"]] for sd in sensors_doc}

    # --- arbitration
    aobj = root.obj("arbitration")
    staleness = aobj.integer("staleness_ticks", 5)
    aobj.finish()
    if staleness < 0:
        raise ScenarioError("scenario.arbitration.staleness_ticks", "must be >= 0")

    # --- nominal / safety config blocks
    nobj = root.obj("nominal")
    nom_doc = {}
    nom_kwargs = {}
    for fname, fdef in _config_fields(NominalConfig):
        if isinstance(fdef, int) and not isinstance(fdef, bool):
            val = nobj.integer(fname, fdef)
        else:
            val = float(nobj.number(fname, fdef))
        nom_doc[fname] = val
        nom_kwargs[fname] = val
    nobj.finish()
    nominal_config = NominalConfig(**nom_kwargs)

    sobj = root.obj("safety")
    saf_doc = {}
    saf_kwargs = {}
    for fname, fdef in _config_fields(MonitorConfig):
        if isinstance(fdef, int) and not isinstance(fdef, bool):
            val = sobj.integer(fname, fdef)
        else:
            val = float(sobj.number(fname, fdef))
        saf_doc[fname] = val
        saf_kwargs[fname] = val
    sobj.finish()
    safety_config = MonitorConfig(**saf_kwargs)
    if not (0 < safety_config.rating_threshold <= 1):
        raise ScenarioError("scenario.safety.rating_threshold", "must be in (0, 1]")

    # --- faults
    fault_specs = []
    faults_doc = []
    for i, fd in enumerate(root.array("faults")):
        fo = _Obj(fd, f"scenario.faults[{i}]")
        target = fo.string("target", required=True)
        kind = fo.string("kind", required=True)
        window = fo.array("window", required=True)
        if len(window) != 2:
            raise ScenarioError(f"{fo.path}.window", "expected [t_start, t_end]")
        pobj = fo.obj("params")
        raw_params = dict(pobj.data)
        pobj.seen.update(raw_params)
        fo.finish()
        is_channel = kind in CHANNEL_FAULT_KINDS
        pool = seen_channel_ids if is_channel else seen_sensor_ids
        if target not in pool:
            raise ScenarioError(
                f"{fo.path}.target",
                f"unknown {'channel' if is_channel else 'sensor'} id {target!r}",
            )
        try:
            spec = FaultSpec(target=target, kind=kind, t_start=float(window[0]),
                             t_end=float(window[1]), params=raw_params, index=i)
        except ValidationError as e:
            raise ScenarioError(fo.path, str(e))
        fault_specs.append(spec)
        faults_doc.append(
            {
                "target": target,
                "kind": kind,
                "window": [spec.t_start, spec.t_end],
                "params": {k: spec.params[k] for k in sorted(spec.params)},
            }
        )

    # --- termination
    tobj = root.obj("termination")
    max_time = float(tobj.number("max_time", 10.0))
    if max_time <= 0:
        raise ScenarioError("scenario.termination.max_time", "must be > 0")
    stop_on_collision = tobj.boolean("stop_on_collision", True)
    goal_raw = tobj.raw("goal", None)
    tobj.seen.add("goal")
    goal = None
    goal_doc = None
    if goal_raw is not None:
        go = _Obj(goal_raw, "scenario.termination.goal")
        goal = (
            float(go.number("x", required=True)),
            float(go.number("y", required=True)),
            float(go.number("radius", 2.0)),
        )
        go.finish()
        goal_doc = {"x": goal[0], "y": goal[1], "radius": goal[2]}
    tobj.finish()
    termination = Termination(max_time=max_time, stop_on_collision=stop_on_collision, goal=goal)

    # --- acceptance
    cobj = root.obj("acceptance")
    acceptance = {
        "no_collisions": cobj.boolean("no_collisions", False),
        "require_outcome": cobj.string("require_outcome", None),
    }
    cobj.finish()

    # --- sweep
    sweep = []
    sweep_doc = []
    root_doc_stub: dict = {}  # filled below; paths are validated against it
    for i, vd in enumerate(root.array("sweep")):
        vo = _Obj(vd, f"scenario.sweep[{i}]")
        path = vo.string("path", required=True)
        values = vo.array("values", required=True)
        vo.finish()
        if not values:
            raise ScenarioError(f"scenario.sweep[{i}].values", "must be non-empty")
        sweep.append(SweepVariable(path=path, values=list(values)))
        sweep_doc.append({"path": path, "values": list(values)})

    root.finish()

    doc = {
        "format_version": FORMAT_VERSION,
        "name": name,
        "seed": seed,
        "dt": dt,
        "world": world_doc,
        "environment": env_doc,
        "ego": {"state": ego_state, "params": ego_params},
        "actors": actors_doc,
        "sensors": sensors_doc,
        "routing": routing_doc,
        "channels": channels_doc,
        "arbitration": {"staleness_ticks": staleness},
        "nominal": nom_doc,
        "safety": saf_doc,
        "faults": faults_doc,
        "sweep": sweep_doc,
        "termination": {
            "max_time": max_time,
            "stop_on_collision": stop_on_collision,
            "goal": goal_doc,
        },
        "acceptance": acceptance,
    }

    for i, var in enumerate(sweep):
        try:
            _resolve_path(doc, var.path)
        except ScenarioError:
            raise ScenarioError(f"scenario.sweep[{i}].path", f"does not resolve: {var.path!r}")

    return ScenarioSpec(
        doc=doc,
        name=name,
        seed=seed,
        dt=dt,
        world=world,
        sensors=sensors,
        routing=routing,
        channels=channels,
        staleness_ticks=staleness,
        nominal_config=nominal_config,
        safety_config=safety_config,
        faults=fault_specs,
        sweep=sweep,
        termination=termination,
        acceptance=acceptance,
    )


def _config_fields(cls):
    import dataclasses

    return [(f.name, f.default) for f in dataclasses.fields(cls)]


def serialize_scenario(spec: ScenarioSpec) -> str:
    """Canonical fully-defaulted form; parse(serialize(spec)) is the identity."""
    return json.dumps(spec.doc, indent=2, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# sweep expansion


def _resolve_path(doc, path: str):
    """Walk a dotted path; list elements with an 'id' field match by id."""
    parts = path.split(".")
    node = doc
    for k, part in enumerate(parts):
        where = ".".join(parts[: k + 1])
        if isinstance(node, dict):
            if part not in node:
                raise ScenarioError(where, "no such key")
            if k == len(parts) - 1:
                return node, part
            node = node[part]
        elif isinstance(node, list):
            match = None
            for item in node:
                if isinstance(item, dict) and item.get("id") == part:
                    match = item
                    break
            if match is None:
                raise ScenarioError(where, f"no list element with id {part!r}")
            node = match
            if k == len(parts) - 1:
                raise ScenarioError(where, "path must end at a scalar or object value")
        else:
            raise ScenarioError(where, "path descends into a scalar")
    raise ScenarioError(path, "empty path")


def _apply_value(container, key, value, path: str):
    existing = container[key]
    def is_num(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    if is_num(existing) and is_num(value):
        container[key] = value
    elif isinstance(existing, str) and isinstance(value, str):
        container[key] = value
    elif isinstance(existing, dict) and isinstance(value, dict):
        for k, v in value.items():
            if k not in existing:
                raise ScenarioError(f"{path}.{k}", "no such key in swept object")
            _apply_value(existing, k, v, f"{path}.{k}")
    else:
        raise ScenarioError(
            path, f"value {value!r} not type-compatible with existing {existing!r}"
        )


def expand_sweep(spec: ScenarioSpec, cap: int = SWEEP_CAP) -> SweepPlan:
    """Cartesian product of sweep values in declaration order, with derived seeds."""
    counts = [len(v.values) for v in spec.sweep]
    total = 1
    for c in counts:
        total *= c
    if total > cap:
        raise ScenarioError("scenario.sweep", f"sweep would expand to {total} runs (cap {cap})")
    runs = []
    value_lists = [v.values for v in spec.sweep]
    for run_id, combo in enumerate(itertools.product(*value_lists)):
        doc = copy.deepcopy(spec.doc)
        doc["sweep"] = []
        doc["seed"] = mix64(spec.seed, run_id)
        for var, value in zip(spec.sweep, combo):
            container, key = _resolve_path(doc, var.path)
            _apply_value(container, key, copy.deepcopy(value), var.path)
        run_spec = parse_scenario_doc(doc)
        runs.append(RunManifest(run_id=run_id, seed=doc["seed"], spec=run_spec))
    return SweepPlan(scenario_name=spec.name, runs=runs)
