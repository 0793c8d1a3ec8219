"""Shared fixtures: the default parameter point and a scenario-file factory."""
import copy
import json
import pathlib

import pytest

from nanoflow.geometry import volume_set
from nanoflow.params import NetworkParams

REPO = pathlib.Path(__file__).resolve().parents[1]
SCENARIOS = REPO / "scenarios"

# inline mirror of scenarios/defaults.json so tests can patch sections freely
BASE_SCENARIO = {
    "network": {
        "n": 10000,
        "T": {"value": 1, "unit": "min"},
        "V_t": {"value": 5, "unit": "L"},
        "D": {"value": 6, "unit": "mm"},
        "r": {"value": 1, "unit": "mm"},
        "v": {"value": 10.9, "unit": "cm/s"},
        "t_f": {"value": 64, "unit": "us"},
        "f": 1.0,
        "eta": 0.1,
        "k": 2,
    },
    "energy": {
        "L_f": 64,
        "W": 1.0,
        "E_p": {"value": 0.1, "unit": "fJ"},
        "P_bit": {"value": 2.4, "unit": "fW"},
        "delta_q": {"value": 6, "unit": "pC"},
        "V_g": 0.2,
        "C": {"value": 10, "unit": "pF"},
        "f_ng": 1.0,
    },
    "sim": {"seed": 0, "duration": {"value": 1, "unit": "h"}, "replications": 10},
}


@pytest.fixture(scope="session")
def defaults():
    return NetworkParams()


@pytest.fixture(scope="session")
def default_volumes(defaults):
    return volume_set(defaults)


@pytest.fixture
def make_scenario(tmp_path):
    """Factory writing a (optionally mutated) copy of BASE_SCENARIO to disk."""

    def _make(mutate=None, name="scenario.json"):
        doc = copy.deepcopy(BASE_SCENARIO)
        if mutate is not None:
            mutate(doc)
        path = tmp_path / name
        path.write_text(json.dumps(doc, indent=1))
        return str(path)

    return _make
