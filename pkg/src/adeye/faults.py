"""Scheduled fault injection on sensor frames and channel commands.

Faults are declared only in the scenario document (key ``faults``) and applied
by the kernel in declaration order. Time windows are half-open: a fault is
active when t_start <= time < t_end.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

from .geom import ValidationError, normalize_angle
from .sensors import GpsFix, LidarScan, ObjectList, SensorFrame, UltrasonicRange

SENSOR_FAULT_KINDS = ("dropout", "stuck", "bias", "noise_scale", "dead_sector", "delay")
CHANNEL_FAULT_KINDS = ("freeze", "silence", "offset")

FAULT_PARAM_DEFAULTS: dict[str, dict] = {
    "dropout": {},
    "stuck": {},
    "bias": {"value": 0.0},
    "noise_scale": {"factor": 1.0},
    "dead_sector": {"start": 0.0, "end": 0.0},
    "delay": {"ticks": 1},
    "freeze": {},
    "silence": {},
    "offset": {"accel": 0.0, "steer": 0.0},
}


@dataclass
class FaultSpec:
    target: str  # sensor id or channel id
    kind: str
    t_start: float
    t_end: float
    params: dict = field(default_factory=dict)
    index: int = 0  # declaration order

    def __post_init__(self):
        if self.kind not in FAULT_PARAM_DEFAULTS:
            raise ValidationError(f"faults[{self.index}].kind", f"unknown kind {self.kind!r}")
        if not (0.0 <= self.t_start < self.t_end):
            raise ValidationError(
                f"faults[{self.index}].window", f"need 0 <= t_start < t_end, got [{self.t_start}, {self.t_end})"
            )
        merged = dict(FAULT_PARAM_DEFAULTS[self.kind])
        for k, v in self.params.items():
            if k not in merged:
                raise ValidationError(f"faults[{self.index}].params.{k}", "unknown parameter")
            merged[k] = v
        self.params = merged
        if self.kind == "delay" and not (isinstance(self.params["ticks"], int) and self.params["ticks"] >= 1):
            raise ValidationError(f"faults[{self.index}].params.ticks", "delay needs an integer >= 1")
        if self.kind == "noise_scale" and self.params["factor"] < 0:
            raise ValidationError(f"faults[{self.index}].params.factor", "must be >= 0")

    def active(self, time: float) -> bool:
        return self.t_start <= time < self.t_end


def active_faults(schedule: list[FaultSpec], time: float) -> list[FaultSpec]:
    """Faults whose half-open window covers `time`, in declaration order."""
    return [f for f in schedule if f.active(time)]


def noise_scale_factor(faults: list[FaultSpec]) -> float:
    """Combined sigma multiplier from active noise_scale faults (applied at sampling time)."""
    factor = 1.0
    for f in faults:
        if f.kind == "noise_scale":
            factor *= f.params["factor"]
    return factor


@dataclass
class SensorFaultState:
    """Per-sensor runtime state the kernel owns: stuck history and delay queue."""

    last_delivered: Optional[SensorFrame] = None
    delay_queue: list[tuple[int, SensorFrame]] = field(default_factory=list)


def _apply_bias(frame: SensorFrame, value: float) -> SensorFrame:
    frame = copy.deepcopy(frame)
    p = frame.payload
    if isinstance(p, LidarScan):
        p.ranges = [None if r is None else max(0.0, r + value) for r in p.ranges]
    elif isinstance(p, UltrasonicRange):
        if p.range is not None:
            p.range = max(0.0, p.range + value)
    elif isinstance(p, GpsFix):
        p.x += value
        p.y += value
    elif isinstance(p, ObjectList):
        for d in p.detections:
            dist = math.hypot(d.rel_x, d.rel_y)
            if dist > 0:
                scale = max(0.0, dist + value) / dist
                d.rel_x *= scale
                d.rel_y *= scale
    else:  # ImuSample
        p.accel += value
        p.yaw_rate += value
    return frame


def _apply_dead_sector(frame: SensorFrame, start: float, end: float) -> SensorFrame:
    frame = copy.deepcopy(frame)
    p = frame.payload

    def in_sector(angle: float) -> bool:
        a = normalize_angle(angle)
        s, e = normalize_angle(start), normalize_angle(end)
        if s <= e:
            return s <= a <= e
        return a >= s or a <= e

    if isinstance(p, LidarScan):
        p.ranges = [None if in_sector(a) else r for a, r in zip(p.angles, p.ranges)]
    elif isinstance(p, ObjectList):
        p.detections = [d for d in p.detections if not in_sector(math.atan2(d.rel_y, d.rel_x))]
    return frame


def apply_sensor_faults(
    frame: Optional[SensorFrame],
    faults: list[FaultSpec],
    state: SensorFaultState,
    tick: int,
) -> Optional[SensorFrame]:
    """Transform (or suppress) one sensor frame; updates stuck/delay state.

    Call once per sensor per sampling tick, with the frame freshly sampled.
    Any frame released from the delay queue for this tick is delivered instead
    of a suppressed fresh frame. Declaration order of faults is the
    composition order and is part of the contract.
    """
    released = [f for due, f in state.delay_queue if due <= tick]
    state.delay_queue = [(due, f) for due, f in state.delay_queue if due > tick]

    for fault in faults:
        if frame is None:
            break
        if fault.kind == "dropout":
            frame = None
        elif fault.kind == "stuck":
            frame = copy.deepcopy(state.last_delivered) if state.last_delivered else None
            if frame is not None:
                frame.tick = tick
        elif fault.kind == "bias":
            frame = _apply_bias(frame, fault.params["value"])
        elif fault.kind == "dead_sector":
            frame = _apply_dead_sector(frame, fault.params["start"], fault.params["end"])
        elif fault.kind == "delay":
            state.delay_queue.append((tick + fault.params["ticks"], frame))
            frame = None
        # noise_scale is applied at sampling time (sigma multiplier)

    if frame is None and released:
        frame = released[0]
        for extra in released[1:]:
            state.delay_queue.append((tick, extra))
    if frame is not None:
        state.last_delivered = copy.deepcopy(frame)
    return frame


@dataclass
class ChannelFaultState:
    # last command actually delivered downstream (post-fault); frozen commands
    # keep their original tick stamp, so a long freeze eventually goes stale
    last_command: Optional[object] = None


def apply_channel_faults(command, faults: list[FaultSpec], state: ChannelFaultState,
                         steer_max: float, accel_max: float):
    """Transform a channel's emitted command at the command boundary."""
    for fault in faults:
        if fault.kind == "silence":
            command = None
        elif fault.kind == "freeze":
            command = copy.deepcopy(state.last_command)
        elif fault.kind == "offset" and command is not None:
            command = copy.deepcopy(command)
            command.accel = max(-accel_max, min(accel_max, command.accel + fault.params["accel"]))
            command.steer = max(-steer_max, min(steer_max, command.steer + fault.params["steer"]))
    if command is not None:
        state.last_command = copy.deepcopy(command)
    return command
