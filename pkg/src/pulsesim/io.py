"""Result files: trial tables, summaries, manifests and distribution snapshots.

All writers are deterministic: identical inputs give byte-identical files.
Floats in CSV use 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from . import __version__
from .collapse import collapsed_state, dissolve_into_pulse, sample_collapse
from .experiment import BetaScenario, TrialRecord, TrialRunner, ensemble_statistics, run_ensemble
from .rng import TrialStream
from .scenario import NEUTRAL, PAINFUL, Scenario, load_scenario
from .state import Phase, ScenarioError, SystemState

TRIAL_COLUMNS = (
    "trial_index", "branch", "u_sc", "t_sc", "raw_weight_sq", "equilibrium_center", "steps",
)
FORMATS = ("csv", "json")

EXIT_OK = 0
EXIT_INVALID_SCENARIO = 2
EXIT_IO = 3


@dataclass(frozen=True)
class RunConfig:
    scenario_path: Path
    master_seed: int
    n_trials: int = 1
    output_dir: Path = Path("out")
    output_format: str = "csv"
    record_weights_history: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be >= 1")
        if self.output_format not in FORMATS:
            raise ValueError(f"output_format must be one of {FORMATS}")


def fmt_float(x: Optional[float]) -> str:
    return "" if x is None else format(float(x), ".17g")


def trial_row(rec: TrialRecord) -> dict:
    traj = rec.trajectory
    return {
        "trial_index": rec.trial_index,
        "branch": rec.branch,
        "u_sc": rec.collapse.u_sc,
        "t_sc": rec.collapse.t_sc,
        "raw_weight_sq": rec.collapse.raw_weight_sq,
        "equilibrium_center": traj.equilibrium_center,
        "steps": traj.steps,
    }


def trials_csv(records: Iterable[TrialRecord]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRIAL_COLUMNS)
    for rec in records:
        row = trial_row(rec)
        writer.writerow([
            row["trial_index"], row["branch"], fmt_float(row["u_sc"]), fmt_float(row["t_sc"]),
            fmt_float(row["raw_weight_sq"]), fmt_float(row["equilibrium_center"]), row["steps"],
        ])
    return buf.getvalue()


def trials_json(records: Iterable[TrialRecord]) -> str:
    lines = [json.dumps(trial_row(r), allow_nan=False) for r in records]
    return "[\n" + ",\n".join(lines) + "\n]\n"


def read_trials_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for row in rows:
        out.append({
            "trial_index": int(row["trial_index"]),
            "branch": row["branch"],
            "u_sc": float(row["u_sc"]),
            "t_sc": float(row["t_sc"]),
            "raw_weight_sq": float(row["raw_weight_sq"]),
            "equilibrium_center": float(row["equilibrium_center"]) if row["equilibrium_center"] else None,
            "steps": int(row["steps"]),
        })
    return out


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def trajectories_json(records: Iterable[TrialRecord]) -> str:
    """Distinct drift trajectories keyed by branch and u_sc, with squared-weight histories."""
    seen = {}
    for rec in records:
        key = (rec.branch, rec.collapse.u_sc)
        if key not in seen:
            seen[key] = rec.trajectory
    entries = []
    for (branch, u_sc), traj in sorted(seen.items()):
        entry = {
            "branch": branch,
            "u_sc": u_sc,
            "u_grid": traj.final_pulses[0].u_grid.tolist(),
            "centers": traj.centers.tolist(),
            "steps_to_equilibrium": traj.steps_to_equilibrium,
            "equilibrium_center": traj.equilibrium_center,
        }
        if traj.weights_history is not None:
            entry["weights_sq_history"] = [w.tolist() for w in traj.weights_history]
        entries.append(entry)
    return dumps_json(entries)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def write_outputs(
    out_dir: Path,
    records: list,
    summary: dict,
    manifest: dict,
    output_format: str = "csv",
    weights_history: bool = False,
) -> dict:
    """Write every artifact of a run and return {filename: sha256}. Single writer, no partial files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = {}
    trials_name = f"trials.{output_format}"
    files[trials_name] = trials_csv(records) if output_format == "csv" else trials_json(records)
    files["summary.json"] = dumps_json(summary)
    if weights_history:
        files["trajectories.json"] = trajectories_json(records)
    hashes = {}
    for name, text in files.items():
        data = text.encode()
        (out_dir / name).write_bytes(data)
        hashes[name] = _sha256(data)
    manifest = dict(manifest, files=hashes)
    (out_dir / "manifest.json").write_bytes(dumps_json(manifest).encode())
    return hashes


def build_manifest(scenario_bytes: bytes, scenario: Scenario, master_seed: int, n_trials: int,
                   **extra) -> dict:
    manifest = {
        "tool": "pulsesim",
        "version": __version__,
        "scenario_sha256": _sha256(scenario_bytes),
        "scenario_digest": scenario.digest(),
        "master_seed": master_seed,
        "n_trials": n_trials,
    }
    manifest.update(extra)
    return manifest


def run(config: RunConfig, stderr=None) -> int:
    """Validate the scenario, run the ensemble and write trials, summary and manifest.

    Returns 0 on success (non-convergence only adds warnings to the summary),
    2 for an invalid scenario and 3 for I/O failures.
    """
    stderr = stderr or sys.stderr
    try:
        raw = Path(config.scenario_path).read_bytes()
    except OSError as exc:
        print(f"error: cannot read scenario: {exc}", file=stderr)
        return EXIT_IO
    try:
        scenario = load_scenario(config.scenario_path)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc.path}: {exc.message}", file=stderr)
        return EXIT_INVALID_SCENARIO
    beta = BetaScenario.from_scenario(scenario)
    records = run_ensemble(
        beta, config.master_seed, config.n_trials,
        workers=config.workers, record_history=config.record_weights_history,
    )
    summary = ensemble_statistics(records, beta.branch_prob)
    for warning in summary["warnings"]:
        print(f"warning: {warning}", file=stderr)
    manifest = build_manifest(raw, scenario, config.master_seed, config.n_trials,
                              output_format=config.output_format)
    try:
        write_outputs(config.output_dir, records, summary, manifest,
                      config.output_format, config.record_weights_history)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=stderr)
        return EXIT_IO
    return EXIT_OK


# -- distribution snapshots ------------------------------------------------------


def snapshot_rows(state: SystemState) -> tuple[np.ndarray, np.ndarray]:
    """(u', squared weight) columns describing ``state``.

    Before the hit this is the interaction distribution. Right after the hit
    only the chosen site is non-zero and it keeps its raw squared weight. Once
    pulsed, the rows are the (normalized) pulse.
    """
    if state.phase is Phase.PRE_HIT:
        w = np.asarray(state.interaction.weights)
        return np.asarray(state.interaction.u_values, dtype=float), w * w
    if state.phase is Phase.COLLAPSED:
        u = np.asarray(state.interaction.u_values, dtype=float)
        w2 = np.zeros_like(u)
        w2[state.collapse.index] = state.collapse.raw_weight_sq
        return u, w2
    return np.asarray(state.brain_pulse.u_grid), state.brain_pulse.weights_sq


def _snapshot_block(label: str, u, w2) -> str:
    lines = [f"# stage: {label}", "u,weight_sq"]
    lines += [f"{fmt_float(a)},{fmt_float(b)}" for a, b in zip(u, w2)]
    return "\n".join(lines) + "\n\n"


def emit_distribution_snapshot(state: SystemState, path, label: Optional[str] = None,
                               append: bool = False) -> None:
    """Write one two-column block (u', squared weight) for ``state``.

    Blocks are separated by a blank line and introduced by ``# stage: <label>``.
    """
    u, w2 = snapshot_rows(state)
    block = _snapshot_block(label or state.phase.value, u, w2)
    with open(path, "a" if append else "w") as fh:
        fh.write(block)


def read_snapshots(path) -> list[tuple[str, np.ndarray, np.ndarray]]:
    blocks = []
    label, rows = None, []
    for line in Path(path).read_text().splitlines() + [""]:
        if line.startswith("# stage:"):
            label, rows = line.split(":", 1)[1].strip(), []
        elif line == "" and label is not None:
            arr = np.array(rows, dtype=float).reshape(-1, 2)
            blocks.append((label, arr[:, 0], arr[:, 1]))
            label = None
        elif line and line != "u,weight_sq" and label is not None:
            rows.append([float(x) for x in line.split(",")])
    return blocks


def trial_snapshots(scenario: Scenario, master_seed: int, trial_index: int, path,
                    every: int = 100) -> TrialRecord:
    """Snapshot file for one trial: stages 1-3 followed by drift steps every ``every`` steps.

    Uses the same random stream as the ensemble, so the trial matches row
    ``trial_index`` of a run with the same seed.
    """
    beta = BetaScenario.from_scenario(scenario)
    runner = TrialRunner(beta, record_history=True)
    rng = TrialStream(master_seed, trial_index)
    branch = PAINFUL if rng.uniform() < beta.branch_prob else NEUTRAL
    state = scenario.initial_state(branch)
    outcome = sample_collapse(state, rng)
    collapsed = collapsed_state(state, outcome)
    brain, phys = dissolve_into_pulse(outcome, scenario.kernel, scenario.grid_step)
    pulsed = replace(collapsed, phase=Phase.PULSED, brain_pulse=brain, phys_pulse=phys)
    traj = runner.trajectory(branch, pulsed)

    with open(path, "w") as fh:
        u, w2 = snapshot_rows(state)
        fh.write(_snapshot_block("stage1_distribution", u, w2))
        u, w2 = snapshot_rows(collapsed)
        fh.write(_snapshot_block("stage2_collapsed", u, w2))
        u, w2 = snapshot_rows(pulsed)
        fh.write(_snapshot_block("stage3_pulse", u, w2))
        grid = pulsed.brain_pulse.u_grid
        last = len(traj.weights_history) - 1
        for step, w2 in enumerate(traj.weights_history):
            if step == 0 or (step % every and step != last):
                continue
            fh.write(_snapshot_block(f"drift_step_{step:06d}", grid, w2))
    return TrialRecord(trial_index, master_seed, branch, outcome, traj)
