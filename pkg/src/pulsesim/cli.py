"""Command-line entry point: ``pulsesim {run,beta-experiment,seed-spread,snapshot,validate}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .experiment import BetaScenario, kappa_sweep
from .io import (
    EXIT_INVALID_SCENARIO,
    EXIT_IO,
    EXIT_OK,
    RunConfig,
    build_manifest,
    dumps_json,
    run,
    trial_snapshots,
    trials_csv,
    trials_json,
)
from .rng import MAX_SEED
from .scenario import default_document, load_scenario, validate_scenario
from .seed import SeedMolecule, seed_spread
from .state import ScenarioError


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pulsesim", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pulsesim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an ensemble for a scenario file")
    p.add_argument("--scenario", required=True, type=Path)
    p.add_argument("--seed", required=True, type=_seed)
    p.add_argument("--trials", required=True, type=_positive_int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--weights-history", action="store_true",
                   help="also write trajectories.json with squared-weight histories")
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("beta-experiment", help="two-branch experiment with a kappa sweep")
    p.add_argument("--scenario", type=Path, default=None,
                   help="scenario file (default: bundled beta scenario)")
    p.add_argument("--trials", type=_positive_int, default=10_000)
    p.add_argument("--branch-prob", type=float, default=None)
    p.add_argument("--kappa", type=float, nargs="+", default=[0.0, 0.1, 1.0])
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--same-seed", action="store_true",
                   help="use one seed for every kappa instead of seed + k")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for per-kappa trial files and summary.json")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=_positive_int, default=None)

    p = sub.add_parser("seed-spread", help="velocity uncertainty and spread of a seed molecule")
    p.add_argument("--mass", type=float, default=10_000.0, help="atomic mass units")
    p.add_argument("--width", type=float, default=10e-9, help="classical width in metres")
    p.add_argument("--time", type=float, default=0.1, help="elapsed time in seconds")
    p.add_argument("--spacing", type=float, default=1e-6, help="receptor spacing in metres")
    p.add_argument("--factor", type=float, default=1.0, help="uncertainty factor (1 for hbar, 0.5 for hbar/2)")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("snapshot", help="plottable stage and drift snapshots of one trial")
    p.add_argument("--scenario", required=True, type=Path)
    p.add_argument("--seed", required=True, type=_seed)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--every", type=_positive_int, default=100)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("validate", help="validate a scenario file and print its canonical form")
    p.add_argument("--scenario", required=True, type=Path)
    return parser


def _cmd_run(args) -> int:
    config = RunConfig(
        scenario_path=args.scenario,
        master_seed=args.seed,
        n_trials=args.trials,
        output_dir=args.out,
        output_format=args.format,
        record_weights_history=args.weights_history,
        workers=args.workers,
    )
    return run(config)


def _cmd_beta(args) -> int:
    if args.scenario is None:
        raw = json.dumps(default_document(), sort_keys=True).encode()
        scenario = validate_scenario(default_document())
    else:
        raw = args.scenario.read_bytes()
        scenario = load_scenario(args.scenario)
    beta = BetaScenario.from_scenario(scenario, args.branch_prob)
    sweep = kappa_sweep(beta, args.kappa, args.seed, args.trials,
                        distinct_seeds=not args.same_seed, workers=args.workers)
    summary = {
        "branch_prob": beta.branch_prob,
        "chi2": sweep["chi2"],
        "p_value": sweep["p_value"],
        "runs": [
            {"kappa": r["kappa"], "seed": r["seed"], "summary": r["summary"]}
            for r in sweep["runs"]
        ],
    }
    print(dumps_json(summary), end="")
    if args.out is not None:
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        for r in sweep["runs"]:
            records = r["records"]
            text = trials_csv(records) if args.format == "csv" else trials_json(records)
            (out / f"trials_kappa_{r['kappa']:g}.{args.format}").write_text(text)
        (out / "summary.json").write_text(dumps_json(summary))
        manifest = build_manifest(raw, scenario, args.seed, args.trials,
                                  kappas=list(args.kappa), distinct_seeds=not args.same_seed)
        (out / "manifest.json").write_text(dumps_json(manifest))
    return EXIT_OK


def _cmd_seed_spread(args) -> int:
    try:
        result = seed_spread(SeedMolecule(args.mass, args.width), args.time, args.spacing, args.factor)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    if args.json:
        print(json.dumps(result.__dict__, sort_keys=True))
    else:
        print(f"delta_v_m_per_s    {result.delta_v:.6g}")
        print(f"delta_v_mm_per_s   {result.delta_v * 1e3:.6g}")
        print(f"spread_length_m    {result.spread_length:.6g}")
        print(f"spread_length_um   {result.spread_length * 1e6:.6g}")
        print(f"receptors_covered  {result.receptors_covered}")
    return EXIT_OK


def _cmd_snapshot(args) -> int:
    scenario = load_scenario(args.scenario)
    rec = trial_snapshots(scenario, args.seed, args.trial, args.out, args.every)
    print(f"trial {rec.trial_index}: branch={rec.branch} u_sc={rec.collapse.u_sc:g} "
          f"steps={rec.trajectory.steps} -> {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    print(dumps_json(scenario.to_document()), end="")
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "beta-experiment": _cmd_beta,
    "seed-spread": _cmd_seed_spread,
    "snapshot": _cmd_snapshot,
    "validate": _cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc.path}: {exc.message}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
