"""Two-branch beta-source experiment and ensemble statistics.

The source picks the painful or the neutral stimulus first. Collapse and
drift then run on the chosen branch only, so pain can shape the pulse after
the choice but never bias the choice itself.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .collapse import CollapseOutcome, reduce_system
from .dynamics import DriftTrajectory, evolve_to_equilibrium
from .rng import TrialStream
from .scenario import NEUTRAL, PAINFUL, Scenario
from .state import DriftParams

THREADS_ENV = "PULSESIM_THREADS"
MIN_TRIALS_PER_WORKER = 2_000
UNDERPOWERED_N = 1_000


@dataclass(frozen=True, eq=False)
class BetaScenario:
    """A painful branch (monotone pain) and a neutral branch (flat pain) behind one source."""

    scenario: Scenario
    branch_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.branch_prob <= 1.0:
            raise ValueError(f"branch_prob must lie in [0, 1], got {self.branch_prob}")

    @classmethod
    def from_scenario(cls, scenario: Scenario, branch_prob: Optional[float] = None) -> "BetaScenario":
        return cls(scenario, scenario.branch_prob if branch_prob is None else branch_prob)


@dataclass(frozen=True, eq=False)
class TrialRecord:
    trial_index: int
    seed: int
    branch: str
    collapse: CollapseOutcome
    trajectory: DriftTrajectory

    @property
    def displacement(self) -> float:
        return self.trajectory.displacement


class TrialRunner:
    """Runs trials of one beta scenario, reusing work that does not depend on the seed.

    The pre-hit state of each branch is built once, and the drift trajectory
    is memoized by (branch, u_sc) since it is a pure function of the pulse.
    """

    def __init__(self, beta: BetaScenario, params: Optional[DriftParams] = None,
                 record_history: bool = False):
        self.beta = beta
        self.params = params or beta.scenario.drift
        self.record_history = record_history
        self._states = {}
        self._trajectories = {}

    def _initial(self, branch: str):
        if branch not in self._states:
            self._states[branch] = self.beta.scenario.initial_state(branch)
        return self._states[branch]

    def trajectory(self, branch: str, pulsed) -> DriftTrajectory:
        key = (branch, pulsed.collapse.u_sc)
        traj = self._trajectories.get(key)
        if traj is None:
            sc = self.beta.scenario
            grid = pulsed.brain_pulse.u_grid
            traj = evolve_to_equilibrium(
                pulsed,
                sc.pain_for(grid, branch),
                sc.potential_for(grid, branch),
                self.params,
                record_history=self.record_history,
            )
            self._trajectories[key] = traj
        return traj

    def run(self, rng, trial_index: int = 0, seed: int = 0) -> TrialRecord:
        branch = PAINFUL if rng.uniform() < self.beta.branch_prob else NEUTRAL
        sc = self.beta.scenario
        pulsed = reduce_system(self._initial(branch), rng, sc.kernel, sc.grid_step)
        traj = self.trajectory(branch, pulsed)
        return TrialRecord(trial_index, seed, branch, pulsed.collapse, traj)

    def run_indices(self, master_seed: int, indices: Sequence[int]) -> list:
        return [self.run(TrialStream(master_seed, i), i, master_seed) for i in indices]


def run_beta_trial(s: BetaScenario, params: Optional[DriftParams], rng, trial_index: int = 0,
                   seed: int = 0) -> TrialRecord:
    """One trial: branch draw, then collapse and drift on that branch."""
    return TrialRunner(s, params).run(rng, trial_index, seed)


def _worker_count(n_trials: int, workers: Optional[int]) -> int:
    if workers is None:
        workers = os.cpu_count() or 1
        cap = os.environ.get(THREADS_ENV)
        if cap:
            workers = min(workers, max(1, int(cap)))
    return max(1, min(workers, n_trials // MIN_TRIALS_PER_WORKER or 1))


def _run_chunk(args):
    beta, params, record_history, master_seed, start, stop = args
    runner = TrialRunner(beta, params, record_history)
    return runner.run_indices(master_seed, range(start, stop))


def run_ensemble(
    beta: BetaScenario,
    master_seed: int,
    n_trials: int,
    params: Optional[DriftParams] = None,
    workers: Optional[int] = None,
    record_history: bool = False,
) -> list:
    """``n_trials`` records in trial-index order.

    Every trial draws from its own (master_seed, trial_index) stream, so the
    records do not depend on the worker count. ``workers`` defaults to the CPU
    count capped by ``PULSESIM_THREADS``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    n_workers = _worker_count(n_trials, workers)
    if n_workers == 1:
        return TrialRunner(beta, params, record_history).run_indices(master_seed, range(n_trials))
    bounds = np.linspace(0, n_trials, n_workers + 1).astype(int)
    jobs = [(beta, params, record_history, master_seed, int(a), int(b))
            for a, b in zip(bounds[:-1], bounds[1:])]
    records = []
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        for chunk in pool.map(_run_chunk, jobs):
            records.extend(chunk)
    return records


# -- statistics ----------------------------------------------------------------


@dataclass(frozen=True)
class FrequencyCheck:
    """Empirical frequencies against analytic probabilities, bin by bin."""

    n: int
    probs: np.ndarray
    freqs: np.ndarray
    half_widths: np.ndarray
    n_sigma: float
    underpowered: bool = field(default=False)

    @property
    def within(self) -> np.ndarray:
        return np.abs(self.freqs - self.probs) <= self.half_widths

    @property
    def passed(self) -> bool:
        return bool(np.all(self.within))


def frequency_check(counts: Sequence[int], probs: Sequence[float], n_sigma: float = 3.0) -> FrequencyCheck:
    """Binomial n-sigma bands sqrt(p(1-p)/N) around each probability.

    Samples smaller than 1000 are flagged as underpowered instead of failing.
    """
    counts = np.asarray(counts, dtype=float)
    probs = np.asarray(probs, dtype=float)
    n = int(counts.sum())
    if n == 0:
        raise ValueError("no samples")
    half = n_sigma * np.sqrt(probs * (1.0 - probs) / n)
    return FrequencyCheck(n, probs, counts / n, half, n_sigma, underpowered=n < UNDERPOWERED_N)


@dataclass(frozen=True)
class BranchSummary:
    count: int
    frequency: float
    ci_low: float
    ci_high: float
    mean_displacement: Optional[float]
    displacement_std: Optional[float]
    t_statistic: Optional[float]
    positive_fraction: Optional[float]
    mean_steps_to_equilibrium: Optional[float]
    non_converged: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _branch_summary(records: list, n_total: int, z: float) -> BranchSummary:
    k = len(records)
    p = k / n_total
    half = z * math.sqrt(p * (1.0 - p) / n_total)
    if not records:
        return BranchSummary(0, 0.0, 0.0, half, None, None, None, None, None, 0)
    disp = np.array([r.displacement for r in records])
    mean = float(disp.mean())
    std = float(disp.std(ddof=1)) if k > 1 else 0.0
    if std > 0:
        t = mean / (std / math.sqrt(k))
    else:
        t = None  # undefined for constant displacements
    steps = [r.trajectory.steps_to_equilibrium for r in records
             if r.trajectory.steps_to_equilibrium is not None]
    return BranchSummary(
        count=k,
        frequency=p,
        ci_low=max(0.0, p - half),
        ci_high=min(1.0, p + half),
        mean_displacement=mean,
        displacement_std=std,
        t_statistic=t,
        positive_fraction=float(np.mean(disp > 0)),
        mean_steps_to_equilibrium=float(np.mean(steps)) if steps else None,
        non_converged=k - len(steps),
    )


def ensemble_statistics(records: Sequence[TrialRecord], branch_prob: float = 0.5,
                        n_sigma: float = 3.0) -> dict:
    """Branch frequencies, per-branch drift, and the pre-choice suppression check.

    ``pre_choice_consistent`` is true when the painful frequency lies within
    ``n_sigma`` binomial deviations of ``branch_prob``.
    """
    if not records:
        raise ValueError("ensemble_statistics needs at least one record")
    n = len(records)
    painful = [r for r in records if r.branch == PAINFUL]
    neutral = [r for r in records if r.branch == NEUTRAL]
    freq = len(painful) / n
    sd = math.sqrt(branch_prob * (1.0 - branch_prob) / n)
    if sd > 0:
        z = (freq - branch_prob) / sd
        consistent = abs(z) <= n_sigma
    else:
        z = 0.0 if freq == branch_prob else math.copysign(math.inf, freq - branch_prob)
        consistent = freq == branch_prob
    non_converged = sum(1 for r in records if not r.trajectory.converged)
    return {
        "n_trials": n,
        "branch_prob": branch_prob,
        "painful": _branch_summary(painful, n, n_sigma).as_dict(),
        "neutral": _branch_summary(neutral, n, n_sigma).as_dict(),
        "pre_choice": {
            "painful_frequency": freq,
            "expected": branch_prob,
            "z_score": z if math.isfinite(z) else None,
            "n_sigma": n_sigma,
            "consistent": consistent,
        },
        "non_converged": non_converged,
        "warnings": (
            [f"{non_converged} trajectories did not converge within max_steps"]
            if non_converged else []
        ),
    }


def branch_homogeneity(painful_counts: Sequence[int], totals: Sequence[int]) -> tuple[float, float]:
    """Chi-square test that the painful fraction is the same across runs: (statistic, p-value)."""
    painful = np.asarray(painful_counts)
    table = np.vstack([painful, np.asarray(totals) - painful])
    chi2, p, _, _ = stats.chi2_contingency(table, correction=False)
    return float(chi2), float(p)


def kappa_sweep(
    beta: BetaScenario,
    kappas: Sequence[float],
    master_seed: int,
    n_trials: int,
    distinct_seeds: bool = True,
    workers: Optional[int] = None,
) -> dict:
    """Run the experiment once per kappa and test branch frequencies for homogeneity.

    With ``distinct_seeds`` run k uses ``master_seed + k``; otherwise every
    run shares the seed and the branch sequences coincide exactly.
    """
    runs = []
    for k, kappa in enumerate(kappas):
        scenario = beta.scenario.with_drift(kappa=kappa)
        seed = master_seed + k if distinct_seeds else master_seed
        records = run_ensemble(BetaScenario(scenario, beta.branch_prob), seed, n_trials,
                               workers=workers)
        runs.append({
            "kappa": kappa,
            "seed": seed,
            "records": records,
            "summary": ensemble_statistics(records, beta.branch_prob),
        })
    counts = [r["summary"]["painful"]["count"] for r in runs]
    if len(runs) > 1 and 0 < sum(counts) < n_trials * len(runs):
        chi2, p = branch_homogeneity(counts, [n_trials] * len(runs))
    else:
        chi2, p = 0.0, 1.0
    return {"runs": runs, "chi2": chi2, "p_value": p}
