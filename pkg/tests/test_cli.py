import json

import pytest
from click.testing import CliRunner

from adeye.cli import main
from tests.conftest import make_doc


@pytest.fixture
def runner():
    return CliRunner()


def write_scenario(tmp_path, name="t.json", **overrides):
    p = tmp_path / name
    p.write_text(json.dumps(make_doc(**overrides)))
    return str(p)


def test_validate_ok(runner, tmp_path):
    path = write_scenario(tmp_path)
    res = runner.invoke(main, ["validate", path])
    assert res.exit_code == 0
    assert res.output == "ok: t (1 run)\n"


def test_validate_counts_sweep_runs(runner, tmp_path):
    path = write_scenario(tmp_path, sweep=[
        {"path": "ego.state.speed", "values": [1, 2, 3]},
        {"path": "seed", "values": [1, 2]},
    ])
    res = runner.invoke(main, ["validate", path])
    assert res.exit_code == 0 and "(6 runs)" in res.output


def test_validate_bad_scenario_exits_1(runner, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"name": "x"}')
    res = runner.invoke(main, ["validate", str(p)])
    assert res.exit_code == 1
    assert "validation error" in res.output


def test_map_writes_artifacts(runner, tmp_path):
    path = write_scenario(tmp_path)
    res = runner.invoke(main, ["map", path, "-o", str(tmp_path / "maps")])
    assert res.exit_code == 0
    assert (tmp_path / "maps" / "t.pointmap.json").exists()
    assert (tmp_path / "maps" / "t.lanemap.json").exists()


def test_run_writes_trace_and_report(runner, tmp_path):
    path = write_scenario(tmp_path)
    res = runner.invoke(main, ["run", path, "-o", str(tmp_path / "out")])
    assert res.exit_code == 0
    assert (tmp_path / "out" / "t.trace.ndjson").exists()
    report = json.loads((tmp_path / "out" / "t.report.json").read_text())
    assert report["outcome"] == "timeout"


def test_run_set_override_changes_digest(runner, tmp_path):
    path = write_scenario(tmp_path)
    r1 = runner.invoke(main, ["run", path, "-o", str(tmp_path / "a")])
    r2 = runner.invoke(main, ["run", path, "-o", str(tmp_path / "b"),
                              "--set", "ego.state.speed=2.0"])
    assert r1.exit_code == 0 and r2.exit_code == 0
    d1 = json.loads((tmp_path / "a" / "t.report.json").read_text())["digest"]
    d2 = json.loads((tmp_path / "b" / "t.report.json").read_text())["digest"]
    assert d1 != d2


def test_run_seed_flag_changes_digest(runner, tmp_path):
    path = write_scenario(tmp_path)
    r1 = runner.invoke(main, ["run", path, "-o", str(tmp_path / "a"), "--seed", "7"])
    r2 = runner.invoke(main, ["run", path, "-o", str(tmp_path / "b"), "--seed", "8"])
    assert r1.exit_code == 0 and r2.exit_code == 0
    d1 = json.loads((tmp_path / "a" / "t.report.json").read_text())["digest"]
    d2 = json.loads((tmp_path / "b" / "t.report.json").read_text())["digest"]
    assert d1 != d2


def test_run_bad_override_exits_1(runner, tmp_path):
    path = write_scenario(tmp_path)
    res = runner.invoke(main, ["run", path, "--set", "nosuch.path=1"])
    assert res.exit_code == 1


def test_run_acceptance_failure_exits_3(runner, tmp_path):
    path = write_scenario(tmp_path, acceptance={"require_outcome": "goal_reached"})
    res = runner.invoke(main, ["run", path, "-o", str(tmp_path / "out")])
    assert res.exit_code == 3
    assert "acceptance: FAIL" in res.output


def test_run_uses_map_artifacts(runner, tmp_path):
    path = write_scenario(tmp_path)
    assert runner.invoke(main, ["map", path, "-o", str(tmp_path / "m")]).exit_code == 0
    r1 = runner.invoke(main, ["run", path, "-o", str(tmp_path / "a"),
                              "--map-dir", str(tmp_path / "m")])
    r2 = runner.invoke(main, ["run", path, "-o", str(tmp_path / "b")])
    assert r1.exit_code == 0 and r2.exit_code == 0
    d1 = json.loads((tmp_path / "a" / "t.report.json").read_text())["digest"]
    d2 = json.loads((tmp_path / "b" / "t.report.json").read_text())["digest"]
    assert d1 == d2  # offline map artifacts reproduce the in-process map


def test_sweep_and_resume(runner, tmp_path):
    path = write_scenario(
        tmp_path,
        sweep=[{"path": "ego.state.speed", "values": [2.0, 4.0]}],
        termination={"max_time": 0.5},
    )
    out = tmp_path / "sweep"
    res = runner.invoke(main, ["sweep", path, "-o", str(out)])
    assert res.exit_code == 0
    assert "2 runs" in res.output
    report = json.loads((out / "sweep_report.json").read_text())
    digests = [r["digest"] for r in report["rows"]]
    (out / "run_00000.report.json").unlink()
    res2 = runner.invoke(main, ["sweep", path, "-o", str(out), "--resume"])
    assert res2.exit_code == 0
    report2 = json.loads((out / "sweep_report.json").read_text())
    assert [r["digest"] for r in report2["rows"]] == digests
    assert report2["skipped"] == [1]


def test_replay_check_and_digest(runner, tmp_path):
    path = write_scenario(tmp_path)
    assert runner.invoke(main, ["run", path, "-o", str(tmp_path / "out")]).exit_code == 0
    trace = str(tmp_path / "out" / "t.trace.ndjson")
    digest = json.loads((tmp_path / "out" / "t.report.json").read_text())["digest"]
    res = runner.invoke(main, ["replay", trace, "--check", "--expect-digest", digest])
    assert res.exit_code == 0
    assert "invariants: ok" in res.output
    res2 = runner.invoke(main, ["replay", trace, "--expect-digest", "0" * 64])
    assert res2.exit_code == 2
    assert "digest mismatch" in res2.output


def test_replay_check_flags_tampered_trace(runner, tmp_path):
    path = write_scenario(tmp_path)
    assert runner.invoke(main, ["run", path, "-o", str(tmp_path / "out")]).exit_code == 0
    trace = tmp_path / "out" / "t.trace.ndjson"
    lines = trace.read_text().splitlines()
    trace.write_text("\n".join(lines[:-1]) + "\n")  # drop the end record
    res = runner.invoke(main, ["replay", str(trace), "--check"])
    assert res.exit_code == 2
    assert "missing end record" in res.output


def test_out_dir_env_default(runner, tmp_path, monkeypatch):
    monkeypatch.setenv("ADEYE_OUT", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    path = write_scenario(tmp_path)
    res = runner.invoke(main, ["run", path])
    assert res.exit_code == 0
    assert (tmp_path / "envout" / "t.trace.ndjson").exists()
