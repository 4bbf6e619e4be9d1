import copy
import json
from pathlib import Path

import pytest

from pulsesim.scenario import default_document

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


@pytest.fixture
def beta_doc():
    return copy.deepcopy(default_document())


@pytest.fixture
def small_doc():
    return json.loads((SCENARIOS / "single_branch.json").read_text())


@pytest.fixture
def write_doc(tmp_path):
    def _write(doc, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return path

    return _write
