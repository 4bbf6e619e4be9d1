"""Pain-driven drift of the twin pulses and the restoring counter-flux.

Squared weight moves only between adjacent grid points:

* pain flux, rightward:   f_j = kappa * max(pi_j - pi_{j+1}, 0) * w_j^2 * dt
* restoring flux, leftward: g_j = lambda * max(V_{j+1} - V_j, 0) * w_{j+1}^2 * dt

Every bond is updated simultaneously. Mass never leaves the grid, so it can
pile up at the right edge.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .state import ContractError, DriftParams, Phase, Pulse, SystemState

QUIET_STEPS = 10


class DriftError(RuntimeError):
    """A drift step would have driven a squared weight negative."""


class PainMode(str, enum.Enum):
    LINEAR_DECREASING = "linear_decreasing"
    CUSTOM = "custom"
    NEUTRAL = "neutral"


@dataclass(frozen=True, eq=False)
class PainProfile:
    values: np.ndarray
    monotone_flag: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ContractError("pain values must be a finite 1-D array")
        if self.monotone_flag and np.any(np.diff(v) >= 0):
            raise ContractError("monotone pain profile must be strictly decreasing")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_neutral(self) -> bool:
        return bool(np.all(self.values == self.values[0]))


@dataclass(frozen=True, eq=False)
class RestoringPotential:
    values: np.ndarray
    capacity_u: float = math.inf

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or not np.all(np.isfinite(v)):
            raise ContractError("potential values must be a finite 1-D array")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def flat(cls, n: int) -> "RestoringPotential":
        return cls(np.zeros(n))


def pain_profile(
    grid: Sequence[float],
    mode: str = "linear_decreasing",
    slope: float = 1.0,
    values: Optional[Sequence[float]] = None,
) -> PainProfile:
    """Pain intensity on ``grid``.

    ``linear_decreasing`` gives -slope * u' (slope > 0), ``neutral`` gives
    zeros, ``custom`` takes ``values`` as given and marks them monotone when
    they strictly decrease.
    """
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ContractError("pain grid must be strictly increasing")
    mode = PainMode(mode)
    if mode is PainMode.NEUTRAL:
        return PainProfile(np.zeros_like(grid), monotone_flag=False)
    if mode is PainMode.LINEAR_DECREASING:
        if not slope > 0:
            raise ContractError(f"linear_decreasing pain needs slope > 0, got {slope}")
        return PainProfile(-slope * grid, monotone_flag=True)
    if values is None or len(values) != grid.size:
        raise ContractError("custom pain profile needs one value per grid point")
    v = np.asarray(values, dtype=float)
    return PainProfile(v, monotone_flag=bool(np.all(np.diff(v) < 0)))


def restoring_potential(
    grid: Sequence[float], capacity_u: float, stiffness: float
) -> RestoringPotential:
    """Zero below ``capacity_u``, rising linearly with ``stiffness`` beyond it."""
    if stiffness < 0:
        raise ContractError("potential stiffness must be >= 0")
    grid = np.asarray(grid, dtype=float)
    values = stiffness * np.maximum(grid - capacity_u, 0.0) if math.isfinite(capacity_u) \
        else np.zeros_like(grid)
    return RestoringPotential(values, capacity_u)


def pulse_center(p: Pulse) -> float:
    """Squared-weight mean of the pulse grid."""
    return float(np.dot(p.u_grid, p.weights_sq))


@dataclass(frozen=True, eq=False)
class DriftTrajectory:
    """Pulse centres after each step; ``centers[0]`` is the starting centre."""

    centers: np.ndarray
    weights_history: Optional[list]
    steps: int
    steps_to_equilibrium: Optional[int]
    equilibrium_center: Optional[float]
    final_pulses: tuple
    elapsed: float

    def apply_to(self, state: SystemState) -> SystemState:
        """Install the drifted pulses in ``state``; phase becomes equilibrated on convergence."""
        brain, phys = self.final_pulses
        return replace(
            state,
            phase=Phase.EQUILIBRATED if self.converged else Phase.PULSED,
            brain_pulse=brain,
            phys_pulse=phys,
            t=state.t + self.elapsed,
        )

    @property
    def converged(self) -> bool:
        return self.equilibrium_center is not None

    @property
    def initial_center(self) -> float:
        return float(self.centers[0])

    @property
    def final_center(self) -> float:
        return float(self.centers[-1])

    @property
    def displacement(self) -> float:
        return self.final_center - self.initial_center


def bond_rates(pain: PainProfile, pot: RestoringPotential, params: DriftParams):
    """Per-step transfer fractions (pain, restoring) for each adjacent pair."""
    pain_gap = np.maximum(pain.values[:-1] - pain.values[1:], 0.0)
    pot_gap = np.maximum(pot.values[1:] - pot.values[:-1], 0.0)
    return params.kappa * pain_gap * params.dt, params.lambda_ * pot_gap * params.dt


def _advance(sq: np.ndarray, fwd: np.ndarray, back: np.ndarray) -> np.ndarray:
    net = fwd * sq[:-1] - back * sq[1:]
    new = sq.copy()
    new[:-1] -= net
    new[1:] += net
    if np.any(new < 0):
        j = int(np.argmin(new))
        raise DriftError(
            f"CFL violation at grid index {j}: squared weight would become {new[j]!r}; "
            "reduce dt or the flux coefficients"
        )
    return new


def _amplitudes(new_sq: np.ndarray, old_sq: np.ndarray, old_w: np.ndarray) -> np.ndarray:
    # untouched entries keep their amplitude bitwise
    w = np.where(new_sq == old_sq, old_w, np.sqrt(new_sq))
    w.setflags(write=False)
    return w


def _check_pair(brain: Pulse, phys: Pulse, pain: PainProfile, pot: RestoringPotential):
    if not np.array_equal(brain.u_grid, phys.u_grid):
        raise ContractError("brain and physiological pulses must share a grid")
    if not np.array_equal(brain.weights, phys.weights):
        raise ContractError("brain and physiological pulses must carry identical weights")
    n = brain.u_grid.size
    if pain.values.size != n or pot.values.size != n:
        raise ContractError("pain profile and potential must match the pulse grid")


def drift_step(
    brain: Pulse,
    phys: Pulse,
    pain: PainProfile,
    pot: RestoringPotential,
    params: DriftParams,
) -> tuple[Pulse, Pulse]:
    """Advance both pulses by one step of ``params.dt``; they receive one shared update."""
    _check_pair(brain, phys, pain, pot)
    fwd, back = bond_rates(pain, pot, params)
    old_sq = brain.weights_sq
    new_sq = _advance(old_sq, fwd, back)
    w = _amplitudes(new_sq, old_sq, brain.weights)
    center = float(np.dot(brain.u_grid, new_sq))
    return (
        Pulse(center, brain.u_grid, w, brain.kind),
        Pulse(center, phys.u_grid, w, phys.kind),
    )


def flux_balance_residual(
    p: Pulse, pain: PainProfile, pot: RestoringPotential, params: DriftParams
) -> np.ndarray:
    """|f_j - g_j| for every adjacent pair, in squared weight per step."""
    fwd, back = bond_rates(pain, pot, params)
    sq = p.weights_sq
    return np.abs(fwd * sq[:-1] - back * sq[1:])


def evolve_to_equilibrium(
    state: SystemState,
    pain: PainProfile,
    pot: RestoringPotential,
    params: DriftParams,
    record_history: bool = False,
) -> DriftTrajectory:
    """Iterate drift steps until the centre stops moving.

    Convergence means |delta centre| < ``convergence_eps`` for 10 consecutive
    steps, or a step that leaves the weights bitwise unchanged (an exact
    fixed point, reported as converged at that step). Hitting ``max_steps``
    is not an error: the trajectory comes back with
    ``equilibrium_center=None``. The trajectory depends only on the pulses,
    so :meth:`DriftTrajectory.apply_to` yields the final state.
    """
    if state.phase is not Phase.PULSED:
        raise ContractError(f"drift requires phase pulsed, got {state.phase.value}")
    brain = state.brain_pulse
    _check_pair(brain, state.phys_pulse, pain, pot)
    fwd, back = bond_rates(pain, pot, params)
    grid = brain.u_grid
    sq0 = brain.weights_sq
    sq = sq0
    prev = float(np.dot(grid, sq))
    centers = [prev]
    history = [sq0.copy()] if record_history else None
    quiet = 0
    converged_at = None
    step = 0
    for step in range(1, params.max_steps + 1):
        new = _advance(sq, fwd, back)
        fixed_point = np.array_equal(new, sq)
        sq = new
        c = float(np.dot(grid, sq))
        centers.append(c)
        if history is not None:
            history.append(sq.copy())
        if fixed_point:
            converged_at = step
            break
        quiet = quiet + 1 if abs(c - prev) < params.convergence_eps else 0
        prev = c
        if quiet >= QUIET_STEPS:
            converged_at = step
            break

    w = _amplitudes(sq, sq0, brain.weights)
    center = centers[-1]
    new_brain = Pulse(center, grid, w, brain.kind)
    new_phys = Pulse(center, grid, w, state.phys_pulse.kind)
    centers_arr = np.array(centers)
    centers_arr.setflags(write=False)
    return DriftTrajectory(
        centers=centers_arr,
        weights_history=history,
        steps=step,
        steps_to_equilibrium=converged_at,
        equilibrium_center=center if converged_at is not None else None,
        final_pulses=(new_brain, new_phys),
        elapsed=step * params.dt,
    )
