import math

import numpy as np
import pytest

from adeye.geom import Pose2D, ValidationError, Circle
from adeye.world import (
    Actor,
    Environment,
    GRAVITY,
    Lane,
    StaticObstacle,
    Waypoint,
    World,
    WorldGeometry,
    advance_scripted,
    body_distance,
    clamp_to_bounds,
    ego_clearance,
    ego_collides,
    ground_truth,
    ray_cast,
    ray_cast_fan,
    step_actor,
)


def make_actor(**kw):
    defaults = dict(id="a", kind="vehicle", pose=Pose2D(0.0, 0.0, 0.0), speed=0.0)
    defaults.update(kw)
    return Actor(**defaults)


ENV = Environment()


# --- kinematic bicycle


def test_step_straight_hand_computed():
    a = make_actor(speed=10.0)
    b = step_actor(a, 0.0, 0.0, 0.1, ENV)
    assert b.pose.x == pytest.approx(1.0)
    assert b.pose.y == 0.0
    assert b.speed == 10.0


def test_step_heading_update_precedes_position():
    # heading integrates first; position advances along the new heading
    a = make_actor(speed=10.0, wheelbase=2.7)
    steer = 0.3
    dt = 0.1
    b = step_actor(a, 0.0, steer, dt, ENV)
    h = (10.0 / 2.7) * math.tan(steer) * dt
    assert b.pose.heading == pytest.approx(h)
    assert b.pose.x == pytest.approx(10.0 * math.cos(h) * dt)
    assert b.pose.y == pytest.approx(10.0 * math.sin(h) * dt)


def test_step_friction_caps_accel():
    # mu=0.3: cap = 2.943; request -10 -> realized -2.943
    env = Environment(friction=0.3)
    a = make_actor(speed=1.0)
    b = step_actor(a, -10.0, 0.0, 1.0, env)
    assert b.accel == pytest.approx(-0.3 * GRAVITY)
    assert b.speed == pytest.approx(0.0)  # 1 - 2.943 clamps at zero


def test_step_speed_never_negative():
    a = make_actor(speed=0.5)
    b = step_actor(a, -100.0, 0.0, 1.0, ENV)
    assert b.speed == 0.0


def test_step_steer_clamped_to_actor_limit():
    a = make_actor(speed=5.0, steer_max=0.6)
    b = step_actor(a, 0.0, 2.0, 0.01, ENV)
    assert b.steer == pytest.approx(0.6)


def test_step_pedestrian_turns_in_place():
    p = make_actor(kind="pedestrian", speed=0.0, length=0.5, width=0.5)
    b = step_actor(p, 0.0, 1.5, 0.1, ENV)  # steer input is a yaw rate
    assert b.pose.heading == pytest.approx(0.15)
    assert (b.pose.x, b.pose.y) == (0.0, 0.0)


def test_step_rejects_bad_inputs():
    a = make_actor()
    with pytest.raises(ValidationError):
        step_actor(a, float("nan"), 0.0, 0.01, ENV)
    with pytest.raises(ValidationError):
        step_actor(a, 0.0, float("inf"), 0.01, ENV)
    with pytest.raises(ValidationError):
        step_actor(a, 0.0, 0.0, 0.0, ENV)


# --- scripted actors


def test_scripted_vehicle_converges_to_waypoint_heading():
    a = make_actor(speed=5.0, script=[Waypoint(50.0, 10.0, 5.0)])
    for _ in range(800):
        a = advance_scripted(a, 0.01, ENV)
    target = math.atan2(10.0 - a.pose.y, 50.0 - a.pose.x)
    assert abs(a.pose.heading - target) < 0.1  # still closing on the bearing


def test_scripted_actor_consumes_waypoints_and_stops():
    a = make_actor(speed=0.0, script=[Waypoint(5.0, 0.0, 5.0), Waypoint(10.0, 0.0, 5.0)])
    for _ in range(1000):
        a = advance_scripted(a, 0.01, ENV)
    assert a.script_index == 2
    assert a.speed == 0.0
    assert a.pose.x > 8.0  # drove past the last capture radius


def test_scripted_ego_rejected():
    with pytest.raises(ValidationError):
        advance_scripted(make_actor(kind="ego"), 0.01, ENV)


def test_clamp_to_bounds_stops_dead():
    a = make_actor(pose=Pose2D(11.0, 0.0, 0.0), speed=3.0)
    b, clamped = clamp_to_bounds(a, (-10, -10, 10, 10))
    assert clamped and b.pose.x == 10.0 and b.speed == 0.0
    c, clamped2 = clamp_to_bounds(make_actor(), (-10, -10, 10, 10))
    assert not clamped2 and c.speed == 0.0


# --- world construction invariants


def lane(id="l"):
    return Lane(id=id, centerline=np.array([[0.0, 0.0], [10.0, 0.0]]), width=3.5)


def test_world_requires_exactly_one_ego():
    with pytest.raises(ValidationError):
        World(obstacles=[], lanes=[], actors=[make_actor(kind="vehicle")],
              environment=ENV, bounds=(-10, -10, 10, 10))
    with pytest.raises(ValidationError):
        World(obstacles=[], lanes=[],
              actors=[make_actor(id="e1", kind="ego"), make_actor(id="e2", kind="ego")],
              environment=ENV, bounds=(-10, -10, 10, 10))


def test_world_rejects_duplicate_ids():
    with pytest.raises(ValidationError):
        World(obstacles=[], lanes=[],
              actors=[make_actor(id="x", kind="ego"), make_actor(id="x")],
              environment=ENV, bounds=(-10, -10, 10, 10))


def test_world_rejects_bad_bounds():
    with pytest.raises(ValidationError):
        World(obstacles=[], lanes=[], actors=[make_actor(kind="ego")],
              environment=ENV, bounds=(10, -10, -10, 10))


# --- ray casting through world geometry


def make_world(obstacles=(), actors=()):
    all_actors = [make_actor(id="ego", kind="ego")] + list(actors)
    return World(obstacles=list(obstacles), lanes=[], actors=all_actors,
                 environment=ENV, bounds=(-100, -100, 100, 100))


def test_ray_cast_circle_exact():
    w = make_world([StaticObstacle(id="c", shape=Circle(10.0, 0.0, 2.0))])
    geom = WorldGeometry(w)
    hit = ray_cast(geom, (0.0, 0.0), 0.0, 50.0, exclude="ego")
    assert hit is not None
    d, owner = hit
    assert owner == "c"
    assert d == pytest.approx(8.0, abs=1e-9)


def test_ray_cast_miss_returns_none():
    w = make_world([StaticObstacle(id="c", shape=Circle(10.0, 0.0, 2.0))])
    geom = WorldGeometry(w)
    assert ray_cast(geom, (0.0, 0.0), math.pi / 2, 50.0, exclude="ego") is None
    assert ray_cast(geom, (0.0, 0.0), 0.0, 5.0, exclude="ego") is None  # out of range


def test_ray_cast_nearest_wins():
    w = make_world(
        [StaticObstacle(id="near", shape=Circle(5.0, 0.0, 1.0)),
         StaticObstacle(id="far", shape=Circle(20.0, 0.0, 1.0))]
    )
    geom = WorldGeometry(w)
    d, owner = ray_cast(geom, (0.0, 0.0), 0.0, 50.0, exclude="ego")
    assert owner == "near" and d == pytest.approx(4.0, abs=1e-9)


def test_ray_cast_actor_footprint():
    other = make_actor(id="car", pose=Pose2D(12.0, 0.0, 0.0), length=4.0, width=2.0)
    w = make_world(actors=[other])
    geom = WorldGeometry(w)
    d, owner = ray_cast(geom, (0.0, 0.0), 0.0, 50.0, exclude="ego")
    assert owner == "car" and d == pytest.approx(10.0, abs=1e-9)  # rear face at x=10


def test_ray_cast_excludes_self():
    w = make_world()
    geom = WorldGeometry(w)
    # from inside the ego's own footprint, excluding it: clean miss
    assert ray_cast(geom, (0.0, 0.0), 0.0, 50.0, exclude="ego") is None


def test_ray_cast_fan_matches_single():
    w = make_world([StaticObstacle(id="c", shape=Circle(10.0, 3.0, 2.0))])
    geom = WorldGeometry(w)
    angles = np.linspace(-0.5, 0.8, 37)
    dists, ids = ray_cast_fan(geom, (0.0, 0.0), angles, 50.0, exclude="ego")
    for ang, d, owner in zip(angles, dists, ids):
        single = ray_cast(geom, (0.0, 0.0), float(ang), 50.0, exclude="ego")
        if single is None:
            assert owner is None
        else:
            assert owner == single[1]
            assert d == pytest.approx(single[0], abs=1e-12)


# --- snapshots, clearance, collision


def test_ground_truth_is_a_deep_snapshot():
    w = make_world()
    scene = ground_truth(w, 3, 0.01)
    assert scene.tick == 3 and scene.time == pytest.approx(0.03)
    w.actors[0] = step_actor(w.actors[0], 1.0, 0.0, 0.01, ENV)
    assert scene.ego.accel == 0.0  # snapshot unaffected by later stepping


def test_ego_clearance_and_collision():
    wall = StaticObstacle(
        id="w",
        shape=__import__("adeye.geom", fromlist=["ConvexPolygon"]).ConvexPolygon(
            np.array([[10.0, -5.0], [12.0, -5.0], [12.0, 5.0], [10.0, 5.0]])
        ),
    )
    w = make_world([wall])
    scene = ground_truth(w, 0, 0.01)
    # ego length 4.5: front face at 2.25, gap = 10 - 2.25
    assert ego_clearance(scene) == pytest.approx(7.75, abs=1e-9)
    assert ego_collides(scene) is None

    w2 = make_world([wall], actors=[make_actor(id="car", pose=Pose2D(9.0, 0.0, 0.0))])
    scene2 = ground_truth(w2, 0, 0.01)
    # car rear at 6.75 clips nothing; ego front at 2.25 -> clear of car by 4.5
    assert ego_collides(scene2) is None
    w3 = make_world(actors=[make_actor(id="car", pose=Pose2D(4.0, 0.0, 0.0))])
    assert ego_collides(ground_truth(w3, 0, 0.01)) == "car"


def test_body_distance_footprint_vs_circle():
    fp = make_actor(id="e", kind="ego").footprint()
    obs = StaticObstacle(id="c", shape=Circle(10.0, 0.0, 1.0))
    assert body_distance(fp, obs) == pytest.approx(10.0 - 2.25 - 1.0, abs=1e-9)
