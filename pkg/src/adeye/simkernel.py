"""Co-simulation master: clock, typed bus, fixed phase schedule, arbitration, trace.

A run is strictly single-threaded and a pure function of its manifest. Each
tick executes seven phases in fixed order: scripted actors, ground truth,
sensors (with faults), channels, arbitration, ego step, logging. The trace is
newline-delimited JSON with a documented field order, so its SHA-256 digest is
stable and replayable.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import faults as flt
from . import nominal as nom
from . import safety as saf
from . import sensors as sns
from .command import ChannelCommand, coast
from .geom import ValidationError
from .scenario import RunManifest, serialize_scenario, stream_seed
from .world import (
    Scene,
    advance_scripted,
    clamp_to_bounds,
    ego_collides,
    ground_truth,
    step_actor,
)

TRACE_SCHEMA_VERSION = 1


class ArbitrationError(RuntimeError):
    pass


class BusConfigError(RuntimeError):
    pass


@dataclass
class BusMessage:
    topic: str
    tick: int
    phase: int
    publisher: str
    payload: Any

    def sort_key(self):
        return (self.phase, self.publisher)


class Bus:
    """Typed topics declared at run start; total order within a tick is (phase, publisher)."""

    def __init__(self):
        self.topics: dict[str, type] = {}
        self.current: list[BusMessage] = []

    def declare(self, topic: str, payload_type: type):
        self.topics[topic] = payload_type

    def check_subscription(self, topic: str):
        if topic not in self.topics:
            raise BusConfigError(
                f"subscribe to undeclared topic {topic!r}; declared topics: {sorted(self.topics)}"
            )

    def publish(self, topic: str, tick: int, phase: int, publisher: str, payload):
        if topic not in self.topics:
            raise BusConfigError(f"publish to undeclared topic {topic!r}")
        if not isinstance(payload, self.topics[topic]):
            raise BusConfigError(
                f"topic {topic!r} expects {self.topics[topic].__name__}, got {type(payload).__name__}"
            )
        self.current.append(BusMessage(topic, tick, phase, publisher, payload))

    def messages(self, topic: Optional[str] = None) -> list[BusMessage]:
        msgs = self.current if topic is None else [m for m in self.current if m.topic == topic]
        return sorted(msgs, key=BusMessage.sort_key)

    def new_tick(self):
        self.current = []


def arbitrate(commands: list[ChannelCommand], tick: int, staleness: int) -> ChannelCommand:
    """Highest-priority fresh command; ties break to the lowest channel_id; empty -> coast."""
    fresh = [c for c in commands if tick - c.tick <= staleness]
    if not fresh:
        return coast(tick)
    fresh.sort(key=lambda c: (-c.priority, c.channel_id))
    if len(fresh) > 1:
        a, b = fresh[0], fresh[1]
        if a.priority == b.priority and a.channel_id == b.channel_id:
            raise ArbitrationError(
                f"two fresh commands with priority {a.priority} from channel {a.channel_id!r}"
            )
    return fresh[0]


# ---------------------------------------------------------------------------
# trace serialization (field order is the schema; do not reorder keys)


def _f(x) -> float:
    return float(x)


def _actor_state_doc(a) -> dict:
    return {
        "x": _f(a.pose.x),
        "y": _f(a.pose.y),
        "heading": _f(a.pose.heading),
        "speed": _f(a.speed),
        "accel": _f(a.accel),
        "steer": _f(a.steer),
        "kind": a.kind,
        "length": _f(a.length),
        "width": _f(a.width),
    }


def _scene_payload(scene: Scene) -> dict:
    return {"actors": {aid: _actor_state_doc(a) for aid, a in scene.actors.items()}}


def _frame_payload(frame: sns.SensorFrame) -> dict:
    p = frame.payload
    if isinstance(p, sns.LidarScan):
        return {
            "kind": "lidar",
            "stamp": frame.tick,
            "angles": [_f(a) for a in p.angles],
            "ranges": [None if r is None else _f(r) for r in p.ranges],
        }
    if isinstance(p, sns.ObjectList):
        return {
            "kind": "objects",
            "stamp": frame.tick,
            "detections": [
                {
                    "x": _f(d.rel_x),
                    "y": _f(d.rel_y),
                    "extent": _f(d.extent),
                    "range_rate": None if d.range_rate is None else _f(d.range_rate),
                }
                for d in p.detections
            ],
        }
    if isinstance(p, sns.GpsFix):
        return {"kind": "gps", "stamp": frame.tick, "x": _f(p.x), "y": _f(p.y)}
    if isinstance(p, sns.ImuSample):
        return {"kind": "imu", "stamp": frame.tick, "accel": _f(p.accel), "yaw_rate": _f(p.yaw_rate)}
    return {"kind": "ultrasonic", "stamp": frame.tick, "range": None if p.range is None else _f(p.range)}


def _command_payload(cmd: ChannelCommand) -> dict:
    return {
        "channel_id": cmd.channel_id,
        "priority": cmd.priority,
        "accel": _f(cmd.accel),
        "steer": _f(cmd.steer),
        "stamp": cmd.tick,
    }


def _msg_record(m: BusMessage) -> dict:
    if isinstance(m.payload, Scene):
        payload = _scene_payload(m.payload)
    elif isinstance(m.payload, sns.SensorFrame):
        payload = _frame_payload(m.payload)
    elif isinstance(m.payload, ChannelCommand):
        payload = _command_payload(m.payload)
    else:
        payload = m.payload  # plain dict (verdict / switch / fault_event)
    return {
        "type": "msg",
        "topic": m.topic,
        "tick": m.tick,
        "phase": m.phase,
        "publisher": m.publisher,
        "payload": payload,
    }


def trace_to_lines(records: list[dict]) -> list[str]:
    return [json.dumps(r, separators=(",", ":"), allow_nan=False) for r in records]


def trace_digest(records: list[dict]) -> str:
    h = hashlib.sha256()
    for line in trace_to_lines(records):
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def write_trace(records: list[dict], path: Path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for line in trace_to_lines(records):
            fh.write(line)
            fh.write("\n")


def read_trace(path: Path) -> list[dict]:
    records = []
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# the run loop


@dataclass
class RunResult:
    records: list[dict]
    outcome: str  # goal_reached | collision | timeout | stopped_by_safety
    ticks: int
    digest: str
    trace_path: Optional[Path] = None


def _build_channels(manifest: RunManifest, map_dir: Optional[Path], debug_hooks: Optional[dict]):
    spec = manifest.spec
    world = spec.world
    ego = world.ego
    channels = []
    for ch in spec.channels:
        if ch.type == "nominal":
            if map_dir is not None:
                pm, lm = nom.load_map(
                    Path(map_dir) / f"{spec.name}.pointmap.json",
                    Path(map_dir) / f"{spec.name}.lanemap.json",
                )
            else:
                pm, lm = nom.build_map(world, spec.nominal_config.map_spacing)
            cfg = nom.NominalConfig(**{**spec.nominal_config.__dict__, "priority": ch.priority})
            channel = nom.NominalChannel(
                channel_id=ch.id,
                config=cfg,
                point_map=pm,
                lane_map=lm,
                initial=nom.Estimate(ego.pose.x, ego.pose.y, ego.pose.heading, ego.speed),
                wheelbase=ego.wheelbase,
                ego_half_width=ego.width / 2,
                steer_limit=ego.steer_max,
                debug_hook=(debug_hooks or {}).get(ch.id),
            )
        else:
            cfg = saf.MonitorConfig(**{**spec.safety_config.__dict__, "priority": ch.priority})
            channel = saf.SafetyChannel(channel_id=ch.id, config=cfg)
        channels.append((ch, channel))
    return channels


def run(manifest: RunManifest, trace_path: Optional[Path] = None,
        map_dir: Optional[Path] = None, debug_hooks: Optional[dict] = None) -> RunResult:
    """Execute one manifest to termination and return its trace."""
    import copy

    spec = manifest.spec
    dt = spec.dt
    world = copy.deepcopy(spec.world)
    env = world.environment
    channels = _build_channels(manifest, map_dir, debug_hooks)

    bus = Bus()
    bus.declare("ground_truth", Scene)
    for s in spec.sensors:
        bus.declare(f"sensor/{s.id}", sns.SensorFrame)
    for ch, _ in channels:
        bus.declare(f"command/{ch.id}", ChannelCommand)
    bus.declare("verdict", dict)
    bus.declare("switch", dict)
    bus.declare("fault_event", dict)

    rngs = {s.id: np.random.default_rng(stream_seed(manifest.seed, s.id)) for s in spec.sensors}
    sensor_states = {s.id: flt.SensorFaultState() for s in spec.sensors}
    channel_states = {ch.id: flt.ChannelFaultState() for ch, _ in channels}
    latest_commands: dict[str, ChannelCommand] = {}
    last_nominal_emit_tick = -(10**9)  # effectively "never"
    last_nominal_command: Optional[ChannelCommand] = None
    latched_reported: set[str] = set()

    manifest_doc = serialize_scenario(spec)
    records: list[dict] = [
        {
            "type": "header",
            "schema_version": TRACE_SCHEMA_VERSION,
            "name": spec.name,
            "run_id": manifest.run_id,
            "seed": manifest.seed,
            "dt": dt,
            "manifest_sha256": hashlib.sha256(manifest_doc.encode("utf-8")).hexdigest(),
        }
    ]

    total_ticks = int(round(spec.termination.max_time / dt))
    outcome = "timeout"
    ticks_done = 0
    for tick in range(total_ticks):
        time = tick * dt
        bus.new_tick()
        events: list[dict] = []

        # phase 1: scripted actors
        for i, actor in enumerate(world.actors):
            if actor.kind == "ego":
                continue
            stepped = advance_scripted(actor, dt, env)
            stepped, clamped = clamp_to_bounds(stepped, world.bounds)
            if clamped:
                events.append({"event": "bounds_clamp", "actor": actor.id})
            world.actors[i] = stepped

        # phase 2: ground truth snapshot
        scene = ground_truth(world, tick, dt)
        bus.publish("ground_truth", tick, 2, "world", scene)

        # phase 3: sensors with faults
        active = flt.active_faults(spec.faults, time)
        for s in spec.sensors:
            if tick % s.rate_divisor != 0:
                continue
            mine = [f for f in active if f.target == s.id]
            sigma_scale = flt.noise_scale_factor(mine)
            frame = sns.sample(scene, scene.ego, s, rngs[s.id], sigma_scale)
            frame = flt.apply_sensor_faults(frame, mine, sensor_states[s.id], tick)
            if frame is not None:
                bus.publish(f"sensor/{s.id}", tick, 3, s.id, frame)

        # phase 4: channels (registration order)
        delivered = [m.payload for m in bus.messages() if isinstance(m.payload, sns.SensorFrame)]
        routed = sns.route(delivered, spec.routing, [ch.id for ch, _ in channels])
        for ch, channel in channels:
            mine = [f for f in active if f.target == ch.id]
            try:
                if ch.type == "nominal":
                    cmd = channel.step(tick, dt, routed[ch.id])
                else:
                    age = tick - last_nominal_emit_tick
                    cmd = channel.step(scene, age, last_nominal_command, tick, dt)
                    if channel.switch.mode == "safety_latched" and ch.id not in latched_reported:
                        latched_reported.add(ch.id)
                        v = channel.last_verdict
                        bus.publish(
                            "verdict", tick, 4, ch.id,
                            {"status": v.status, "reason": v.reason, "evidence": v.evidence},
                        )
                        bus.publish(
                            "switch", tick, 4, ch.id,
                            {"mode": "safety_latched", "latch_tick": channel.switch.latch_tick},
                        )
            except (ValidationError, ArithmeticError, ValueError, KeyError, IndexError) as exc:
                bus.publish("fault_event", tick, 4, ch.id, {"channel": ch.id, "error": str(exc)})
                cmd = None
            cmd = flt.apply_channel_faults(
                cmd, mine, channel_states[ch.id],
                steer_max=world.ego.steer_max, accel_max=spec.safety_config.a_cmd_max,
            )
            if cmd is not None:
                bus.publish(f"command/{ch.id}", tick, 4, ch.id, cmd)
                latest_commands[ch.id] = cmd
                if ch.type == "nominal":
                    last_nominal_emit_tick = tick
                    last_nominal_command = cmd

        # phase 5: arbitration
        applied = arbitrate(list(latest_commands.values()), tick, spec.staleness_ticks)

        # phase 6: ego steps with the winning command
        ego_idx = next(i for i, a in enumerate(world.actors) if a.kind == "ego")
        ego = world.actors[ego_idx]
        stepped = step_actor(ego, applied.accel, applied.steer, dt, env)
        stepped, clamped = clamp_to_bounds(stepped, world.bounds)
        if clamped:
            events.append({"event": "bounds_clamp", "actor": ego.id})
        world.actors[ego_idx] = stepped

        # phase 7: log, then evaluate termination
        post = ground_truth(world, tick, dt)
        collided_with = ego_collides(post)
        if collided_with is not None:
            events.append({"event": "collision", "with": collided_with})
        for m in bus.messages():
            records.append(_msg_record(m))
        records.append(
            {
                "type": "state",
                "tick": tick,
                "time": _f(time),
                "applied": _command_payload(applied),
                "actors": {aid: _actor_state_doc(a) for aid, a in post.actors.items()},
                "active_faults": [f.index for f in active],
                "events": events,
            }
        )
        ticks_done = tick + 1

        if collided_with is not None and spec.termination.stop_on_collision:
            outcome = "collision"
            break
        goal = spec.termination.goal
        if goal is not None:
            gx, gy, gr = goal
            e = post.ego
            if math.hypot(e.pose.x - gx, e.pose.y - gy) <= gr:
                outcome = "goal_reached"
                break

    if outcome == "timeout":
        latched = any(
            channel.switch.mode == "safety_latched"
            for ch, channel in channels
            if ch.type == "safety"
        )
        if latched and world.ego.speed == 0.0:
            outcome = "stopped_by_safety"

    records.append(
        {"type": "end", "outcome": outcome, "ticks": ticks_done, "final_time": _f(ticks_done * dt)}
    )
    digest = trace_digest(records)
    if trace_path is not None:
        write_trace(records, trace_path)
    return RunResult(records=records, outcome=outcome, ticks=ticks_done,
                     digest=digest, trace_path=trace_path)
