"""Test-automation harness: per-run metrics, parallel sweeps, machine-readable reports."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import simkernel
from .scenario import RunManifest, ScenarioSpec, SweepPlan, parse_scenario
from .world import Actor, Pose2D, body_distance

REPORT_FORMAT_VERSION = 1
CSV_COLUMNS = [
    "run_id",
    "outcome",
    "collision",
    "min_clearance",
    "time_to_goal",
    "distance_traveled",
    "trigger_tick",
    "trigger_reason",
    "digest",
]


class TruncatedTraceError(ValueError):
    def __init__(self, last_tick: int):
        self.last_tick = last_tick
        super().__init__(f"trace has no end record; last valid tick {last_tick}")


def _ego_from_state(rec: dict) -> Actor:
    aid, a = next((k, v) for k, v in rec["actors"].items() if v["kind"] == "ego")
    return Actor(id=aid, kind="ego", pose=Pose2D(a["x"], a["y"], a["heading"]),
                 speed=a["speed"], length=a["length"], width=a["width"])


def _actor_from_state(aid: str, a: dict) -> Actor:
    return Actor(id=aid, kind=a["kind"], pose=Pose2D(a["x"], a["y"], a["heading"]),
                 speed=a["speed"], length=a["length"], width=a["width"])


def compute_metrics(records: list[dict], spec: ScenarioSpec) -> dict:
    """RunReport document for one completed trace."""
    states = [r for r in records if r.get("type") == "state"]
    ends = [r for r in records if r.get("type") == "end"]
    if not ends:
        raise TruncatedTraceError(states[-1]["tick"] if states else -1)
    end = ends[-1]

    collision = False
    min_clearance = math.inf
    distance = 0.0
    prev_xy = None
    fault_indices: set[int] = set()
    for rec in states:
        ego = _ego_from_state(rec)
        fp = ego.footprint()
        for obs in spec.world.obstacles:
            min_clearance = min(min_clearance, body_distance(fp, obs))
        for aid, a in rec["actors"].items():
            if a["kind"] != "ego":
                min_clearance = min(min_clearance, body_distance(fp, _actor_from_state(aid, a)))
        for ev in rec["events"]:
            if ev.get("event") == "collision":
                collision = True
        fault_indices.update(rec["active_faults"])
        xy = (ego.pose.x, ego.pose.y)
        if prev_xy is not None:
            distance += math.hypot(xy[0] - prev_xy[0], xy[1] - prev_xy[1])
        prev_xy = xy

    trigger = None
    for rec in records:
        if rec.get("type") == "msg" and rec["topic"] == "verdict" and rec["payload"]["status"] == "trigger":
            trigger = {"tick": rec["tick"], "reason": rec["payload"]["reason"]}
            break
    latched = any(r.get("type") == "msg" and r["topic"] == "switch" for r in records)
    final_speed = states[-1]["actors"][_ego_from_state(states[-1]).id]["speed"] if states else 0.0

    if collision:
        outcome = "collision"
    elif end["outcome"] == "goal_reached":
        outcome = "goal_reached"
    elif latched and final_speed == 0.0:
        outcome = "stopped_by_safety"
    else:
        outcome = "timeout"

    faults = [
        {"index": i, "target": spec.faults[i].target, "kind": spec.faults[i].kind}
        for i in sorted(fault_indices)
    ]
    return {
        "run_id": records[0].get("run_id", 0),
        "outcome": outcome,
        "collision": collision,
        "min_clearance": None if math.isinf(min_clearance) else min_clearance,
        "time_to_goal": end["final_time"] if outcome == "goal_reached" else None,
        "distance_traveled": distance,
        "safety_trigger": trigger,
        "fault_windows_active": faults,
        "digest": simkernel.trace_digest(records),
    }


def check_acceptance(rows: list[dict], acceptance: dict) -> Optional[bool]:
    """Evaluate the scenario's declared pass/fail predicates; None when undeclared."""
    checks = []
    if acceptance.get("no_collisions"):
        checks.append(all(not r.get("collision", False) for r in rows if "error" not in r))
    required = acceptance.get("require_outcome")
    if required:
        checks.append(all(r.get("outcome") == required for r in rows if "error" not in r))
    if any("error" in r for r in rows) and checks:
        return False
    if not checks:
        return None
    return all(checks)


def run_one(manifest: RunManifest, trace_path: Path, report_path: Path,
            map_dir: Optional[Path] = None) -> dict:
    result = simkernel.run(manifest, trace_path=trace_path, map_dir=map_dir)
    report = compute_metrics(result.records, manifest.spec)
    report["run_id"] = manifest.run_id
    report_path.parent.mkdir(parents=True, exist_ok=True)
    report_path.write_text(json.dumps(report, indent=2) + "\n")
    return report


def _sweep_worker(args) -> dict:
    run_id, doc_text, trace_path, report_path = args
    try:
        spec = parse_scenario(doc_text)
        manifest = RunManifest(run_id=run_id, seed=spec.seed, spec=spec)
        return run_one(manifest, Path(trace_path), Path(report_path))
    except Exception as exc:  # keep the sweep alive; the row records the failure
        return {"run_id": run_id, "outcome": "error", "error": f"{type(exc).__name__}: {exc}"}


def run_sweep(plan: SweepPlan, out_dir: Path, parallelism: int = 1,
              resume: bool = False) -> dict:
    """Execute every run in the plan; rows are ordered by run id regardless of workers.

    Per-run outputs are written incrementally, so a killed sweep resumes by
    run id: with resume=True, runs whose report file already exists are not
    recomputed.
    """
    from .scenario import serialize_scenario

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: dict[int, dict] = {}
    pending = []
    executed: list[int] = []
    skipped: list[int] = []
    for manifest in plan.runs:
        trace_path = out_dir / f"run_{manifest.run_id:05d}.trace.ndjson"
        report_path = out_dir / f"run_{manifest.run_id:05d}.report.json"
        if resume and report_path.exists():
            rows[manifest.run_id] = json.loads(report_path.read_text())
            skipped.append(manifest.run_id)
            continue
        pending.append(
            (manifest.run_id, serialize_scenario(manifest.spec), str(trace_path), str(report_path))
        )
        executed.append(manifest.run_id)

    if parallelism > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for report in pool.map(_sweep_worker, pending):
                rows[report["run_id"]] = report
    else:
        for args in pending:
            report = _sweep_worker(args)
            rows[report["run_id"]] = report

    ordered = [rows[m.run_id] for m in plan.runs]
    acceptance = plan.runs[0].spec.acceptance if plan.runs else {}
    report = {
        "format_version": REPORT_FORMAT_VERSION,
        "scenario": plan.scenario_name,
        "rows": ordered,
        "aggregates": aggregate_rows(ordered, acceptance),
        "executed": executed,
        "skipped": skipped,
    }
    write_sweep_report(report, out_dir)
    return report


def aggregate_rows(rows: list[dict], acceptance: dict) -> dict:
    clearances = [r["min_clearance"] for r in rows if r.get("min_clearance") is not None]
    return {
        "runs": len(rows),
        "errors": sum(1 for r in rows if "error" in r),
        "collision_count": sum(1 for r in rows if r.get("collision")),
        "trigger_count": sum(1 for r in rows if r.get("safety_trigger")),
        "worst_min_clearance": min(clearances) if clearances else None,
        "passed": check_acceptance(rows, acceptance),
    }


def write_sweep_report(report: dict, out_dir: Path):
    out_dir = Path(out_dir)
    (out_dir / "sweep_report.json").write_text(json.dumps(report, indent=2) + "\n")
    with (out_dir / "sweep_report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in report["rows"]:
            trig = row.get("safety_trigger")
            writer.writerow(
                [
                    row.get("run_id"),
                    row.get("outcome"),
                    row.get("collision", ""),
                    "" if row.get("min_clearance") is None else row["min_clearance"],
                    "" if row.get("time_to_goal") is None else row["time_to_goal"],
                    row.get("distance_traveled", ""),
                    trig["tick"] if trig else "",
                    trig["reason"] if trig else "",
                    row.get("digest", ""),
                ]
            )


# ---------------------------------------------------------------------------
# replay verification


def verify_trace(records: list[dict]) -> list[str]:
    """Invariant checks on a recorded trace; returns a list of violations."""
    problems = []
    header = records[0] if records else {}
    if header.get("type") != "header":
        problems.append("missing header record")
    last_tick = -1
    safety_cmds: dict[int, dict] = {}
    priorities: dict[str, int] = {}
    for rec in records:
        if rec.get("type") == "msg" and rec["topic"].startswith("command/"):
            p = rec["payload"]
            priorities[p["channel_id"]] = p["priority"]
    safety_ids = {cid for cid, prio in priorities.items() if prio == max(priorities.values())} if priorities else set()
    for rec in records:
        if rec.get("type") == "msg" and rec["topic"].startswith("command/"):
            p = rec["payload"]
            if p["channel_id"] in safety_ids and len(priorities) > 1:
                safety_cmds[rec["tick"]] = p
        if rec.get("type") != "state":
            continue
        tick = rec["tick"]
        if tick != last_tick + 1:
            problems.append(f"non-contiguous tick {tick} after {last_tick}")
        last_tick = tick
        for aid, a in rec["actors"].items():
            if a["speed"] < 0:
                problems.append(f"tick {tick}: actor {aid} speed < 0")
        applied = rec["applied"]
        fresh_safety = safety_cmds.get(tick)
        if fresh_safety is not None and applied["channel_id"] not in safety_ids:
            problems.append(f"tick {tick}: fresh safety command not applied")
    if not any(r.get("type") == "end" for r in records):
        problems.append("missing end record")
    return problems
