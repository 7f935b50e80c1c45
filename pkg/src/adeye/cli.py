"""Command-line front end: validate, map, run, sweep, replay.

Exit codes: 0 ok, 1 validation error, 2 run error, 3 acceptance failure.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import harness, nominal, simkernel
from .scenario import (
    RunManifest,
    ScenarioError,
    _apply_value,
    _resolve_path,
    expand_sweep,
    parse_scenario,
    parse_scenario_doc,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUN = 2
EXIT_ACCEPTANCE = 3


def _default_out() -> str:
    return os.environ.get("ADEYE_OUT", "out")


def _load(scenario_path: str):
    try:
        return parse_scenario(Path(scenario_path).read_text())
    except ScenarioError as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)


@click.group()
def main():
    """Deterministic two-channel driving co-simulation."""


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
def validate(scenario):
    """Parse and validate a scenario document."""
    spec = _load(scenario)
    plan_size = 1
    for var in spec.sweep:
        plan_size *= len(var.values)
    click.echo(f"ok: {spec.name} ({plan_size} run{'s' if plan_size != 1 else ''})")


@main.command(name="map")
@click.argument("scenario", type=click.Path(exists=True))
@click.option("-o", "--out-dir", default=_default_out, show_default="$ADEYE_OUT or ./out")
def map_cmd(scenario, out_dir):
    """Offline ideal-condition mapping pre-pass; writes point and lane map artifacts."""
    spec = _load(scenario)
    pm, lm = nominal.build_map(spec.world, spec.nominal_config.map_spacing)
    pm_path, lm_path = nominal.save_map(Path(out_dir), spec.name, pm, lm)
    click.echo(f"wrote {pm_path} ({len(pm)} points)")
    click.echo(f"wrote {lm_path} ({len(lm)} lanes)")


def _apply_overrides(spec, overrides, seed):
    doc = json.loads(json.dumps(spec.doc))
    if seed is not None:
        doc["seed"] = seed
    for item in overrides:
        if "=" not in item:
            raise ScenarioError("--set", f"expected path=value, got {item!r}")
        path, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        container, key = _resolve_path(doc, path)
        _apply_value(container, key, value, path)
    return parse_scenario_doc(doc)


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
@click.option("--set", "overrides", multiple=True, metavar="PATH=VALUE",
              help="Override a scenario parameter (repeatable).")
@click.option("--seed", type=int, default=None)
@click.option("-o", "--out-dir", default=_default_out, show_default="$ADEYE_OUT or ./out")
@click.option("--map-dir", type=click.Path(), default=None,
              help="Load map artifacts from the map pre-pass instead of building in-process.")
def run(scenario, overrides, seed, out_dir, map_dir):
    """Execute a scenario as a single run (sweep variables ignored)."""
    spec = _load(scenario)
    try:
        spec = _apply_overrides(spec, overrides, seed)
    except ScenarioError as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    out = Path(out_dir)
    manifest = RunManifest(run_id=0, seed=spec.seed, spec=spec)
    try:
        report = harness.run_one(
            manifest,
            out / f"{spec.name}.trace.ndjson",
            out / f"{spec.name}.report.json",
            map_dir=Path(map_dir) if map_dir else None,
        )
    except Exception as exc:
        click.echo(f"run error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_RUN)
    click.echo(json.dumps(report, indent=2))
    passed = harness.check_acceptance([report], spec.acceptance)
    if passed is False:
        click.echo("acceptance: FAIL", err=True)
        sys.exit(EXIT_ACCEPTANCE)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
@click.option("-j", "--parallelism", type=int, default=1, show_default=True)
@click.option("-o", "--out-dir", default=_default_out, show_default="$ADEYE_OUT or ./out")
@click.option("--resume", is_flag=True, help="Skip runs whose report file already exists.")
def sweep(scenario, parallelism, out_dir, resume):
    """Expand the sweep and execute every run; writes JSON and CSV reports."""
    spec = _load(scenario)
    try:
        plan = expand_sweep(spec)
    except ScenarioError as e:
        click.echo(f"validation error: {e}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        report = harness.run_sweep(plan, Path(out_dir), parallelism=parallelism, resume=resume)
    except Exception as exc:
        click.echo(f"run error: {type(exc).__name__}: {exc}", err=True)
        sys.exit(EXIT_RUN)
    agg = report["aggregates"]
    click.echo(
        f"{agg['runs']} runs: {agg['collision_count']} collisions, "
        f"{agg['trigger_count']} safety triggers, {agg['errors']} errors"
    )
    if agg["errors"]:
        sys.exit(EXIT_RUN)
    if agg["passed"] is False:
        click.echo("acceptance: FAIL", err=True)
        sys.exit(EXIT_ACCEPTANCE)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("trace", type=click.Path(exists=True))
@click.option("--check", is_flag=True, help="Verify digest and trace invariants.")
@click.option("--expect-digest", default=None, help="Fail unless the digest matches.")
def replay(trace, check, expect_digest):
    """Recompute a trace digest and re-verify recorded invariants."""
    records = simkernel.read_trace(Path(trace))
    digest = simkernel.trace_digest(records)
    click.echo(f"digest: {digest}")
    ok = True
    if expect_digest and digest != expect_digest:
        click.echo(f"digest mismatch: expected {expect_digest}", err=True)
        ok = False
    if check:
        problems = harness.verify_trace(records)
        for p in problems:
            click.echo(f"violation: {p}", err=True)
        ok = ok and not problems
        if not problems:
            click.echo("invariants: ok")
    sys.exit(EXIT_OK if ok else EXIT_RUN)


if __name__ == "__main__":
    main()
