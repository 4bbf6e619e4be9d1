"""Stochastic hit on the interaction branch and dissolution into twin pulses."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .state import (
    ComposedPrior,
    ContractError,
    Interaction,
    Phase,
    Pulse,
    PulseKernel,
    PulseKind,
    ReceptorDistribution,
    SystemState,
)

# grid points closer than this are merged when composing shifted kernels
_GRID_DECIMALS = 9


class CollapsePath(str, enum.Enum):
    UNCONSCIOUS = "unconscious"
    CONSCIOUS_PRIOR = "conscious_prior"


@dataclass(frozen=True)
class CollapseOutcome:
    u_sc: float
    t_sc: float
    raw_weight_sq: float
    path: CollapsePath
    index: int


def selection_probabilities(dist: Interaction) -> np.ndarray:
    """Probability of each component being hit: the squared amplitude.

    The interaction must be normalized, otherwise :class:`ContractError`.
    """
    if not dist.is_normalized:
        raise ContractError("selection requires a normalized distribution")
    w = np.asarray(dist.weights, dtype=float)
    return w * w


def compose_conscious_prior(
    dist: ReceptorDistribution, kernel: PulseKernel, grid_step: float = 1.0
) -> ComposedPrior:
    """Sum R_u F_u(u') over u on the union of the shifted kernel supports.

    Each F_u is the kernel centred at u with unit squared norm.
    """
    if not dist.is_normalized:
        raise ContractError("conscious prior requires a normalized distribution")
    if grid_step <= 0:
        raise ContractError("grid_step must be > 0")
    amps = kernel.amplitudes(grid_step)
    offsets = kernel.offsets() * float(grid_step)
    points = dist.u_values.astype(float)[:, None] + offsets[None, :]
    contrib = dist.weights[:, None] * amps[None, :]
    keys = np.round(points.ravel(), _GRID_DECIMALS)
    grid, inverse = np.unique(keys, return_inverse=True)
    if grid.size == 0:
        raise RuntimeError("empty conscious-prior grid")
    raw = np.bincount(inverse, weights=contrib.ravel(), minlength=grid.size)
    norm = np.sqrt(np.dot(raw, raw))
    return ComposedPrior(u_values=grid, weights=raw / norm, raw_weights=raw)


def _path_of(interaction: Interaction) -> CollapsePath:
    if isinstance(interaction, ComposedPrior):
        return CollapsePath.CONSCIOUS_PRIOR
    return CollapsePath.UNCONSCIOUS


def choose_index(probs: np.ndarray, x: float) -> int:
    """Inverse-CDF pick for a uniform ``x`` in [0, 1); zero-probability entries are never returned."""
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, x * cdf[-1], side="right"))
    if idx >= probs.size:
        idx = int(np.flatnonzero(probs)[-1])
    return idx


def sample_collapse(state: SystemState, rng) -> CollapseOutcome:
    """Draw the hit component and the hit time.

    The component is drawn with its selection probability. The hit time has
    density d/dt r(t)^2 on (0, rise_time], where r is the primed-branch ramp.
    ``rng`` is any object with a ``uniform()`` method returning floats in
    [0, 1); two draws are consumed, component first.
    """
    if state.phase is not Phase.PRE_HIT:
        raise ContractError(f"collapse requires phase pre_hit, got {state.phase.value}")
    probs = selection_probabilities(state.interaction)
    idx = choose_index(probs, rng.uniform())
    t_sc = state.stimulus.hit_time(1.0 - rng.uniform())
    return CollapseOutcome(
        u_sc=float(state.interaction.u_values[idx]),
        t_sc=t_sc,
        raw_weight_sq=float(probs[idx]),
        path=_path_of(state.interaction),
        index=idx,
    )


def collapsed_state(state: SystemState, outcome: CollapseOutcome) -> SystemState:
    """The single surviving component at t_sc; every other component is zeroed."""
    if state.phase is not Phase.PRE_HIT:
        raise ContractError(f"collapse requires phase pre_hit, got {state.phase.value}")
    return replace(
        state,
        phase=Phase.COLLAPSED,
        pre_branch_weight_sq=0.0,
        t=outcome.t_sc,
        collapse=outcome,
    )


def dissolve_into_pulse(
    outcome: CollapseOutcome, kernel: PulseKernel, grid_step: float = 1.0
) -> tuple[Pulse, Pulse]:
    """Conscious pulse at u_sc and its physiological twin, sharing one weight array."""
    if grid_step <= 0:
        raise ContractError("grid_step must be > 0")
    return _pulse_pair(float(outcome.u_sc), kernel, float(grid_step))


@lru_cache(maxsize=4096)
def _pulse_pair(u_sc: float, kernel: PulseKernel, grid_step: float) -> tuple[Pulse, Pulse]:
    # pulses are immutable, so trials hitting the same site share one pair
    grid = u_sc + kernel.offsets() * grid_step
    grid.setflags(write=False)
    weights = kernel.amplitudes(grid_step)
    brain = Pulse(u_sc, grid, weights, PulseKind.BRAIN)
    phys = Pulse(u_sc, grid, weights, PulseKind.PHYSIOLOGICAL)
    return brain, phys


def reduce_system(
    state: SystemState, rng, kernel: PulseKernel, grid_step: float = 1.0
) -> SystemState:
    """pre_hit -> collapsed -> pulsed, returning the pulsed state.

    The pre-interaction branch is zeroed and the twin pulses installed.
    """
    outcome = sample_collapse(state, rng)
    brain, phys = dissolve_into_pulse(outcome, kernel, grid_step)
    return SystemState(
        phase=Phase.PULSED,
        pre_branch_weight_sq=0.0,
        interaction=state.interaction,
        brain_pulse=brain,
        phys_pulse=phys,
        t=outcome.t_sc,
        collapse=outcome,
        stimulus=state.stimulus,
    )
