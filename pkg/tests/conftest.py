import json
from pathlib import Path

import pytest

from adeye.scenario import RunManifest, parse_scenario_doc

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def make_doc(**overrides):
    """Minimal valid scenario document; keyword overrides merge at the top level."""
    doc = {
        "name": "t",
        "seed": 1,
        "world": {
            "bounds": [-10, -20, 200, 20],
            "lanes": [{"id": "main", "width": 3.5, "centerline": [[-10.0, 0.0], [200.0, 0.0]]}],
        },
        "ego": {"state": {"x": 0.0, "y": 0.0, "heading": 0.0, "speed": 5.0}},
        "sensors": [{"id": "gps0", "type": "gps"}, {"id": "imu0", "type": "imu"}],
        "termination": {"max_time": 1.0},
    }
    doc.update(overrides)
    return doc


def make_spec(**overrides):
    return parse_scenario_doc(make_doc(**overrides))


def make_manifest(spec, run_id=0):
    return RunManifest(run_id=run_id, seed=spec.seed, spec=spec)


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


def load_scenario(name):
    from adeye.scenario import parse_scenario

    return parse_scenario((SCENARIO_DIR / f"{name}.json").read_text())
