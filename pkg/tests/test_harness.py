import csv
import json
import math

import pytest

from adeye import harness as H
from adeye import simkernel as K
from adeye.scenario import expand_sweep
from adeye.world import Actor, Pose2D, body_distance
from tests.conftest import load_scenario, make_manifest, make_spec


def run_records(**overrides):
    spec = make_spec(**overrides)
    return K.run(make_manifest(spec)).records, spec


WALL_WORLD = {
    "bounds": [-10, -20, 200, 20],
    "lanes": [{"id": "main", "width": 3.5, "centerline": [[-10.0, 0.0], [200.0, 0.0]]}],
    "obstacles": [{"id": "post", "shape": {"type": "circle", "center": [10.0, 5.0], "radius": 1.0}}],
}


# --- metrics


def test_metrics_truncated_trace_rejected():
    records, spec = run_records()
    with pytest.raises(H.TruncatedTraceError) as e:
        H.compute_metrics(records[:-1], spec)
    assert e.value.last_tick == 99


def test_metrics_min_clearance_matches_brute_force():
    records, spec = run_records(world=WALL_WORLD)
    report = H.compute_metrics(records, spec)
    best = math.inf
    for rec in records:
        if rec["type"] != "state":
            continue
        a = rec["actors"]["ego"]
        ego = Actor(id="ego", kind="ego", pose=Pose2D(a["x"], a["y"], a["heading"]),
                    speed=a["speed"], length=a["length"], width=a["width"])
        best = min(best, body_distance(ego.footprint(), spec.world.obstacles[0]))
    assert report["min_clearance"] == pytest.approx(best, abs=1e-12)


def test_metrics_distance_and_goal_time():
    records, spec = run_records(
        termination={"max_time": 5.0, "goal": {"x": 3.0, "y": 0.0, "radius": 0.5}})
    report = H.compute_metrics(records, spec)
    assert report["outcome"] == "goal_reached"
    assert report["time_to_goal"] == pytest.approx(report["distance_traveled"] / 5.0, rel=0.1)
    assert report["collision"] is False
    assert report["safety_trigger"] is None


def test_metrics_trigger_and_stop():
    records, spec = run_records(
        faults=[{"target": "nominal", "kind": "silence", "window": [0.0, 100.0]}],
        termination={"max_time": 4.0})
    report = H.compute_metrics(records, spec)
    assert report["outcome"] == "stopped_by_safety"
    assert report["safety_trigger"] == {"tick": 0, "reason": "heartbeat_loss"}
    assert report["fault_windows_active"] == [{"index": 0, "target": "nominal", "kind": "silence"}]
    assert report["digest"] == K.trace_digest(records)


# --- acceptance predicates


def test_check_acceptance_none_when_undeclared():
    assert H.check_acceptance([{"collision": True}], {}) is None


def test_check_acceptance_predicates():
    ok = {"outcome": "goal_reached", "collision": False}
    bad = {"outcome": "collision", "collision": True}
    assert H.check_acceptance([ok], {"no_collisions": True}) is True
    assert H.check_acceptance([ok, bad], {"no_collisions": True}) is False
    assert H.check_acceptance([ok], {"require_outcome": "goal_reached"}) is True
    assert H.check_acceptance([ok], {"require_outcome": "timeout"}) is False
    # any errored row fails a declared gate
    assert H.check_acceptance([ok, {"run_id": 1, "outcome": "error", "error": "x"}],
                              {"no_collisions": True}) is False


# --- sweeps


def sweep_spec():
    return make_spec(
        sweep=[{"path": "ego.state.speed", "values": [2.0, 4.0, 6.0]}],
        termination={"max_time": 0.5},
        acceptance={"no_collisions": True},
    )


def test_run_sweep_rows_ordered_and_files_written(tmp_path):
    plan = expand_sweep(sweep_spec())
    report = H.run_sweep(plan, tmp_path)
    assert [r["run_id"] for r in report["rows"]] == [0, 1, 2]
    assert report["aggregates"] == {
        "runs": 3, "errors": 0, "collision_count": 0, "trigger_count": 0,
        "worst_min_clearance": None, "passed": True,
    }
    for i in range(3):
        assert (tmp_path / f"run_{i:05d}.trace.ndjson").exists()
        assert (tmp_path / f"run_{i:05d}.report.json").exists()
    with (tmp_path / "sweep_report.csv").open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == H.CSV_COLUMNS
    assert len(rows) == 4


def test_run_sweep_parallel_matches_serial(tmp_path):
    plan = expand_sweep(sweep_spec())
    serial = H.run_sweep(plan, tmp_path / "s", parallelism=1)
    parallel = H.run_sweep(plan, tmp_path / "p", parallelism=3)
    assert [r["digest"] for r in serial["rows"]] == [r["digest"] for r in parallel["rows"]]


def test_run_sweep_resume_skips_existing(tmp_path):
    plan = expand_sweep(sweep_spec())
    full = H.run_sweep(plan, tmp_path)
    # drop one run's report to simulate a kill mid-sweep
    (tmp_path / "run_00001.report.json").unlink()
    resumed = H.run_sweep(plan, tmp_path, resume=True)
    assert resumed["skipped"] == [0, 2]
    assert resumed["executed"] == [1]
    assert [r["digest"] for r in resumed["rows"]] == [r["digest"] for r in full["rows"]]


def test_run_sweep_records_per_run_errors(tmp_path):
    # make the middle run unparseable at the worker by corrupting its bounds
    plan = expand_sweep(sweep_spec())
    bad_doc = dict(plan.runs[1].spec.doc)
    bad_doc["world"] = {"bounds": [0, 0, 0, 0]}
    plan.runs[1].spec.doc = bad_doc
    report = H.run_sweep(plan, tmp_path)
    assert report["aggregates"]["errors"] == 1
    assert report["rows"][1]["outcome"] == "error"
    assert report["aggregates"]["passed"] is False


# --- replay verification


def test_verify_trace_clean_run():
    records, _ = run_records()
    assert H.verify_trace(records) == []


def test_verify_trace_flags_violations():
    records, _ = run_records()
    assert "missing header record" in H.verify_trace(records[1:])[0]
    assert any("missing end record" in p for p in H.verify_trace(records[:-1]))
    broken = [json.loads(json.dumps(r)) for r in records]
    states = [r for r in broken if r["type"] == "state"]
    states[3]["tick"] = 7
    assert any("non-contiguous" in p for p in H.verify_trace(broken))
    broken2 = [json.loads(json.dumps(r)) for r in records]
    [r for r in broken2 if r["type"] == "state"][0]["actors"]["ego"]["speed"] = -1.0
    assert any("speed < 0" in p for p in H.verify_trace(broken2))


def test_verify_trace_fresh_safety_must_win():
    # nominal must emit for a while so the trace shows both priorities
    records, _ = run_records(
        faults=[{"target": "nominal", "kind": "silence", "window": [0.3, 100.0]}],
        termination={"max_time": 1.5})
    assert H.verify_trace(records) == []
    broken = [json.loads(json.dumps(r)) for r in records]
    # rewrite one applied command to pretend nominal won while safety was fresh
    tick_with_safety = next(r["tick"] for r in broken
                            if r["type"] == "msg" and r["topic"] == "command/safety")
    state = next(r for r in broken if r["type"] == "state" and r["tick"] == tick_with_safety)
    state["applied"]["channel_id"] = "nominal"
    assert any("fresh safety command not applied" in p for p in H.verify_trace(broken))


def test_scenario_file_report_roundtrip(tmp_path, scenario_dir):
    spec = load_scenario("straight_lane")
    report = H.run_one(make_manifest(spec), tmp_path / "t.ndjson", tmp_path / "r.json")
    assert report["outcome"] == "goal_reached"
    saved = json.loads((tmp_path / "r.json").read_text())
    assert saved == report
    assert H.verify_trace(K.read_trace(tmp_path / "t.ndjson")) == []
