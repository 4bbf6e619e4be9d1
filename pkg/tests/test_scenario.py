import json

import jsonschema
import numpy as np
import pytest

from pulsesim.collapse import CollapsePath
from pulsesim.scenario import load_scenario, schema, validate_scenario
from pulsesim.state import Phase, ScenarioError


def test_uniform_three_state_normalization(small_doc):
    small_doc["distribution"].update(u_values=[1, 2, 3], weights=[1, 1, 1], u0=2)
    sc = validate_scenario(small_doc)
    np.testing.assert_allclose(sc.distribution.weights, [0.57735026918962573] * 3, atol=1e-15)
    assert float(np.sum(sc.distribution.weights ** 2)) == pytest.approx(1.0, abs=1e-12)
    state = sc.state
    assert state.phase is Phase.PRE_HIT and state.t == 0.0


def test_cfl_violation(small_doc):
    small_doc["drift"].update(dt=1.0, kappa=1.0, pain={"mode": "linear_decreasing", "slope": 2.0})
    with pytest.raises(ScenarioError, match="CFL violation") as exc:
        validate_scenario(small_doc)
    assert exc.value.path == "drift.dt"


def test_restoring_cfl_violation(small_doc):
    small_doc["drift"].update(dt=1.0, **{"lambda": 2.0})
    with pytest.raises(ScenarioError, match="CFL violation"):
        validate_scenario(small_doc)


@pytest.mark.parametrize(
    "mutate, path, message",
    [
        (lambda d: d["distribution"].update(u_values=[5, 3, 7], weights=[1, 1, 1], u0=5),
         "distribution.u_values", "u grid not increasing"),
        (lambda d: d["distribution"].update(u_values=[], weights=[]),
         "distribution.u_values", "empty distribution"),
        (lambda d: d["distribution"].update(weights=[0, 0, 0, 0, 0]),
         "distribution.weights", "zero"),
        (lambda d: d["kernel"].update(sigma=-1.0), "kernel.sigma", "> 0"),
        (lambda d: d["drift"].update(kappa=-0.1), "drift.kappa", ">= 0"),
        (lambda d: d["drift"].update({"lambda": -2.0}), "drift.lambda", ">= 0"),
        (lambda d: d["drift"].update(dt=-1.0), "drift.dt", ">= 0"),
        (lambda d: d["drift"].update(kapa=0.1), "drift.kapa", "unknown key"),
        (lambda d: d.update(extra={}), "extra", "unknown section"),
        (lambda d: d.pop("kernel"), "kernel", "missing section"),
        (lambda d: d["distribution"].update(path="psychic"), "distribution.path", "unknown path"),
        (lambda d: d.update(experiment={"branch_prob": 1.5}), "experiment.branch_prob", "[0, 1]"),
    ],
)
def test_errors_carry_field_path(small_doc, mutate, path, message):
    mutate(small_doc)
    with pytest.raises(ScenarioError) as exc:
        validate_scenario(small_doc)
    assert exc.value.path == path
    assert message in exc.value.message


def test_round_trip(beta_doc, small_doc):
    for doc in (beta_doc, small_doc):
        first = validate_scenario(doc)
        again = validate_scenario(json.loads(json.dumps(first.to_document())))
        a, b = first.to_document(), again.to_document()
        np.testing.assert_allclose(a["distribution"]["weights"], b["distribution"]["weights"],
                                   rtol=0, atol=1e-15)
        for d in (a, b):
            d["distribution"].pop("weights")
            d.get("experiment", {}).get("neutral_distribution", {}).pop("weights", None)
        assert a == b


def test_gaussian_default_width_comes_from_seed_spread(small_doc):
    small_doc["distribution"] = {"u0": 50, "gaussian": {"sigma": 5.0}}
    sc = validate_scenario(small_doc)
    assert sc.distribution.u_values.size == 64
    assert sc.distribution.u0 == 50


def test_conscious_path_builds_composed_prior(small_doc):
    small_doc["distribution"]["path"] = "conscious_prior"
    sc = validate_scenario(small_doc)
    assert sc.path is CollapsePath.CONSCIOUS_PRIOR
    inter = sc.interaction()
    assert inter.u_values[0] == 8 - 10 and inter.u_values[-1] == 12 + 10


def test_invalid_json_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ScenarioError, match="invalid JSON"):
        load_scenario(p)


def test_bundled_scenarios_match_schema():
    from pathlib import Path

    sch = schema()
    jsonschema.Draft202012Validator.check_schema(sch)
    for path in sorted((Path(__file__).parents[1] / "scenarios").glob("*.json")):
        doc = json.loads(path.read_text())
        jsonschema.validate(doc, sch, cls=jsonschema.Draft202012Validator)
        validate_scenario(doc)


def test_schema_rejects_unknown_key(small_doc):
    small_doc["drift"]["kapa"] = 1
    with pytest.raises(jsonschema.ValidationError):
        jsonschema.validate(small_doc, schema(), cls=jsonschema.Draft202012Validator)
