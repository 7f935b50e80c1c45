"""The single actuation contract every channel emits."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geom import ValidationError


@dataclass
class ChannelCommand:
    channel_id: str
    priority: int
    accel: float
    steer: float
    tick: int

    def __post_init__(self):
        if not (math.isfinite(self.accel) and math.isfinite(self.steer)):
            raise ValidationError(f"command from {self.channel_id}", "accel/steer must be finite")


def coast(tick: int) -> ChannelCommand:
    """Arbitration default when no fresh command exists."""
    return ChannelCommand(channel_id="", priority=-1, accel=0.0, steer=0.0, tick=tick)
