import copy
import math

import pytest

from adeye import faults as F
from adeye.command import ChannelCommand
from adeye.geom import ValidationError
from adeye.sensors import GpsFix, ImuSample, LidarScan, SensorFrame


def spec(kind, target="s", t0=0.0, t1=1.0, **params):
    return F.FaultSpec(target=target, kind=kind, t_start=t0, t_end=t1, params=params)


def gps_frame(tick=0, x=1.0, y=2.0):
    return SensorFrame("s", tick, GpsFix(x, y))


# --- windows and validation


def test_window_half_open():
    f = spec("dropout", t0=1.0, t1=2.0)
    assert not f.active(0.999999)
    assert f.active(1.0)
    assert f.active(1.999999)
    assert not f.active(2.0)


def test_active_faults_declaration_order():
    a = spec("bias", value=1.0)
    b = spec("dropout")
    a.index, b.index = 0, 1
    assert F.active_faults([a, b], 0.5) == [a, b]
    assert F.active_faults([a, b], 5.0) == []


def test_bad_specs_rejected():
    with pytest.raises(ValidationError):
        spec("teleport")
    with pytest.raises(ValidationError):
        spec("dropout", t0=2.0, t1=1.0)
    with pytest.raises(ValidationError):
        spec("dropout", t0=-0.5, t1=1.0)
    with pytest.raises(ValidationError):
        spec("delay", ticks=0)
    with pytest.raises(ValidationError):
        spec("delay", ticks=1.5)
    with pytest.raises(ValidationError):
        spec("noise_scale", factor=-1.0)
    with pytest.raises(ValidationError):
        spec("bias", wrong_param=1.0)


def test_noise_scale_factor_composes():
    fs = [spec("noise_scale", factor=2.0), spec("noise_scale", factor=3.0)]
    assert F.noise_scale_factor(fs) == pytest.approx(6.0)
    assert F.noise_scale_factor([]) == 1.0


# --- sensor fault transforms


def test_dropout_suppresses_frame():
    st = F.SensorFaultState()
    assert F.apply_sensor_faults(gps_frame(), [spec("dropout")], st, 0) is None


def test_stuck_replays_last_delivered():
    st = F.SensorFaultState()
    first = F.apply_sensor_faults(gps_frame(0, 1.0, 2.0), [], st, 0)
    assert first.payload.x == 1.0
    stuck = F.apply_sensor_faults(gps_frame(1, 9.0, 9.0), [spec("stuck")], st, 1)
    assert stuck.payload.x == 1.0  # old data
    assert stuck.tick == 1  # re-stamped to the delivery tick
    # with no history, stuck delivers nothing
    st2 = F.SensorFaultState()
    assert F.apply_sensor_faults(gps_frame(), [spec("stuck")], st2, 0) is None


def test_bias_shifts_gps_and_imu_and_lidar():
    st = F.SensorFaultState()
    g = F.apply_sensor_faults(gps_frame(0, 1.0, 2.0), [spec("bias", value=0.5)], st, 0)
    assert (g.payload.x, g.payload.y) == (1.5, 2.5)
    i = F.apply_sensor_faults(SensorFrame("s", 0, ImuSample(1.0, 0.2)),
                              [spec("bias", value=0.5)], F.SensorFaultState(), 0)
    assert i.payload.accel == 1.5
    scan = SensorFrame("s", 0, LidarScan(angles=[0.0, 1.0], ranges=[10.0, None]))
    l = F.apply_sensor_faults(scan, [spec("bias", value=0.5)], F.SensorFaultState(), 0)
    assert l.payload.ranges == [10.5, None]


def test_dead_sector_blanks_returns_inside_the_arc():
    scan = SensorFrame("s", 0, LidarScan(angles=[0.0, 1.0, 2.0], ranges=[5.0, 6.0, 7.0]))
    out = F.apply_sensor_faults(scan, [spec("dead_sector", start=0.5, end=1.5)],
                                F.SensorFaultState(), 0)
    assert out.payload.ranges == [5.0, None, 7.0]


def test_delay_queues_and_releases_on_later_tick():
    st = F.SensorFaultState()
    d = [spec("delay", t0=0.0, t1=0.005, ticks=2)]
    assert F.apply_sensor_faults(gps_frame(0, 1.0, 0.0), d, st, 0) is None
    # fault window over; the queued frame is released at its due tick
    out1 = F.apply_sensor_faults(gps_frame(1, 2.0, 0.0), [], st, 1)
    assert out1.payload.x == 2.0  # fresh frame wins when present
    # suppress the fresh frame and the stale one surfaces
    st2 = F.SensorFaultState()
    F.apply_sensor_faults(gps_frame(0, 1.0, 0.0), [spec("delay", ticks=2)], st2, 0)
    out = F.apply_sensor_faults(None, [], st2, 2)
    assert out is not None and out.payload.x == 1.0 and out.tick == 0


def test_composition_order_dropout_before_stuck():
    st = F.SensorFaultState()
    F.apply_sensor_faults(gps_frame(0, 1.0, 0.0), [], st, 0)
    # dropout first -> frame is None -> stuck loop breaks, nothing delivered
    out = F.apply_sensor_faults(gps_frame(1, 2.0, 0.0),
                                [spec("dropout"), spec("stuck")], st, 1)
    assert out is None
    # stuck first -> replays history; dropout then kills it anyway
    out2 = F.apply_sensor_faults(gps_frame(2, 3.0, 0.0),
                                 [spec("stuck"), spec("dropout")], st, 2)
    assert out2 is None


def test_frame_untouched_without_faults():
    st = F.SensorFaultState()
    f = gps_frame(0, 1.0, 2.0)
    out = F.apply_sensor_faults(f, [], st, 0)
    assert out is f


# --- channel fault transforms


def cmd(tick=0, accel=1.0, steer=0.1):
    return ChannelCommand(channel_id="nominal", priority=1, accel=accel, steer=steer, tick=tick)


def test_silence_suppresses_command():
    st = F.ChannelFaultState()
    F.apply_channel_faults(cmd(tick=0, accel=2.0), [], st, 0.6, 6.0)
    out = F.apply_channel_faults(cmd(tick=1), [spec("silence", target="nominal")], st, 0.6, 6.0)
    assert out is None
    assert st.last_command.accel == 2.0  # silence leaves delivered history alone


def test_freeze_replays_with_original_stamp():
    st = F.ChannelFaultState()
    F.apply_channel_faults(cmd(tick=5, accel=2.0), [], st, 0.6, 6.0)
    frz = [spec("freeze", target="nominal")]
    out = F.apply_channel_faults(cmd(tick=9, accel=-1.0), frz, st, 0.6, 6.0)
    assert out.accel == 2.0
    assert out.tick == 5  # stale stamp: a long freeze ages out at the arbiter
    # the frozen value persists across the window, not a one-tick lag
    out2 = F.apply_channel_faults(cmd(tick=10, accel=-3.0), frz, st, 0.6, 6.0)
    assert out2.accel == 2.0 and out2.tick == 5
    # freeze with no history emits nothing
    assert F.apply_channel_faults(None, [spec("freeze", target="nominal")],
                                  F.ChannelFaultState(), 0.6, 6.0) is None


def test_offset_shifts_and_reclamps():
    st = F.ChannelFaultState()
    out = F.apply_channel_faults(cmd(accel=5.0, steer=0.5),
                                 [spec("offset", target="nominal", accel=4.0, steer=0.4)],
                                 st, 0.6, 6.0)
    assert out.accel == 6.0  # clamped at accel_max
    assert out.steer == pytest.approx(0.6)  # clamped at steer_max
    assert st.last_command.accel == 6.0  # delivered (post-fault) command recorded


def test_channel_none_passthrough():
    st = F.ChannelFaultState()
    assert F.apply_channel_faults(None, [], st, 0.6, 6.0) is None
