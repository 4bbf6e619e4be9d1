import math

import numpy as np
import pytest

from pulsesim.experiment import (
    BetaScenario,
    TrialRunner,
    branch_homogeneity,
    ensemble_statistics,
    frequency_check,
    kappa_sweep,
    run_beta_trial,
    run_ensemble,
)
from pulsesim.rng import TrialStream
from pulsesim.scenario import NEUTRAL, PAINFUL, validate_scenario


@pytest.fixture
def beta(beta_doc):
    return BetaScenario.from_scenario(validate_scenario(beta_doc))


def test_branch_prob_one_always_painful(beta):
    b = BetaScenario(beta.scenario, 1.0)
    runner = TrialRunner(b)
    assert {runner.run(TrialStream(3, i), i).branch for i in range(300)} == {PAINFUL}


def test_branch_prob_zero_always_neutral(beta):
    b = BetaScenario(beta.scenario, 0.0)
    assert {r.branch for r in run_ensemble(b, 3, 300)} == {NEUTRAL}


def test_single_trial(beta):
    rec = run_beta_trial(beta, None, TrialStream(1, 4), trial_index=4, seed=1)
    assert rec.trial_index == 4 and rec.branch in (PAINFUL, NEUTRAL)
    if rec.branch == PAINFUL:
        assert rec.displacement > 0
    else:
        assert rec.displacement == 0


def test_neutral_centers_constant(beta):
    records = run_ensemble(beta, 8, 400)
    neutral = [r for r in records if r.branch == NEUTRAL]
    assert neutral
    for r in neutral:
        assert np.all(np.abs(r.trajectory.centers - r.trajectory.centers[0]) <= 1e-12)
    painful = [r for r in records if r.branch == PAINFUL]
    assert all(r.displacement > 0 for r in painful)


def test_all_neutral_mean_drift_zero(beta):
    records = run_ensemble(BetaScenario(beta.scenario, 0.0), 2, 500)
    s = ensemble_statistics(records, 0.0)
    assert s["neutral"]["mean_displacement"] == 0.0
    assert s["painful"]["count"] == 0
    assert s["pre_choice"]["consistent"]


def test_painful_drift_significant(beta):
    records = run_ensemble(BetaScenario(beta.scenario, 1.0), 4, 2000)
    s = ensemble_statistics(records, 1.0)["painful"]
    disp = np.array([r.displacement for r in records])
    # oracle: sign test, P(all n positive | median 0) = 2^-n
    assert int(np.sum(disp > 0)) == disp.size
    assert s["t_statistic"] > 5
    assert s["mean_displacement"] == pytest.approx(disp.mean(), rel=1e-12)


def test_worker_count_does_not_change_records(beta):
    a = run_ensemble(beta, 11, 4200, workers=1)
    b = run_ensemble(beta, 11, 4200, workers=2)
    assert [(r.trial_index, r.branch, r.collapse) for r in a] == [(r.trial_index, r.branch, r.collapse) for r in b]
    assert [r.trajectory.equilibrium_center for r in a] == [r.trajectory.equilibrium_center for r in b]


def test_branch_choice_independent_of_kappa_with_shared_seed(beta):
    sweep = kappa_sweep(beta, [0.0, 0.1, 1.0], 21, 3000, distinct_seeds=False)
    branches = [[r.branch for r in run["records"]] for run in sweep["runs"]]
    assert branches[0] == branches[1] == branches[2]
    assert sweep["p_value"] == pytest.approx(1.0)


def test_frequency_check_flags_small_samples():
    c = frequency_check([40, 60], [0.5, 0.5])
    assert c.underpowered
    assert frequency_check([5000, 5000], [0.5, 0.5]).passed


def test_branch_homogeneity_detects_difference():
    _, p_same = branch_homogeneity([5000, 5010], [10000, 10000])
    _, p_diff = branch_homogeneity([5000, 5600], [10000, 10000])
    assert p_same > 0.01 and p_diff < 1e-6


def test_empty_statistics():
    with pytest.raises(ValueError):
        ensemble_statistics([])
