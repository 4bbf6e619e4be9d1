"""Stochastic simulation of pain-state reduction: receptor-number collapse, pulse drift and the beta-source experiment."""

__version__ = "0.1.0"

from .collapse import (  # noqa: E402
    CollapseOutcome,
    CollapsePath,
    compose_conscious_prior,
    dissolve_into_pulse,
    reduce_system,
    sample_collapse,
    selection_probabilities,
)
from .dynamics import (  # noqa: E402
    DriftTrajectory,
    PainProfile,
    RestoringPotential,
    drift_step,
    evolve_to_equilibrium,
    flux_balance_residual,
    pain_profile,
    pulse_center,
    restoring_potential,
)
from .experiment import (  # noqa: E402
    BetaScenario,
    TrialRecord,
    ensemble_statistics,
    kappa_sweep,
    run_beta_trial,
    run_ensemble,
)
from .rng import TrialStream  # noqa: E402
from .scenario import Scenario, load_scenario, validate_scenario  # noqa: E402
from .seed import (  # noqa: E402
    SeedMolecule,
    heisenberg_velocity_uncertainty,
    positional_spread,
    receptor_coverage,
)
from .state import (  # noqa: E402
    DriftParams,
    Pulse,
    PulseKernel,
    ReceptorDistribution,
    StimulusProfile,
    SystemState,
    normalize_distribution,
)
