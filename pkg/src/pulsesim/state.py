"""Domain types shared by the collapse, drift and experiment layers.

Amplitudes are real and non-negative. Components at different receptor
numbers never interfere, so every probability is a sum of squared weights.
All value objects are frozen and hold read-only numpy arrays, which makes
them safe to share between ensemble workers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import TYPE_CHECKING, Optional, Sequence, Union

import numpy as np

if TYPE_CHECKING:
    from .collapse import CollapseOutcome

NORM_TOL = 1e-9


class ScenarioError(ValueError):
    """Invalid scenario input, tagged with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class DegenerateDistributionError(ValueError):
    pass


class ContractError(ValueError):
    """A precondition of an operation was violated by its caller."""


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


def normalize_distribution(weights: Sequence[float]) -> np.ndarray:
    """Scale ``weights`` so that their squares sum to one.

    Ratios between entries are preserved. Raises
    :class:`DegenerateDistributionError` for an empty, all-zero or
    non-finite vector.
    """
    w = np.asarray(weights, dtype=float)
    if w.size == 0:
        raise DegenerateDistributionError("empty distribution")
    if not np.all(np.isfinite(w)):
        raise DegenerateDistributionError("non-finite weight")
    scale = float(np.max(np.abs(w)))
    if scale == 0.0:
        raise DegenerateDistributionError("all weights are zero")
    # scale first so tiny or huge weights do not underflow/overflow when squared
    s = w / scale
    return s / math.sqrt(math.fsum(float(x) * float(x) for x in s))


def squared_norm(weights) -> float:
    return math.fsum(float(x) * float(x) for x in np.asarray(weights, dtype=float))


class Phase(str, enum.Enum):
    PRE_HIT = "pre_hit"
    COLLAPSED = "collapsed"
    PULSED = "pulsed"
    EQUILIBRATED = "equilibrated"


class PulseKind(str, enum.Enum):
    BRAIN = "brain"
    PHYSIOLOGICAL = "physiological"


class Ramp(str, enum.Enum):
    LINEAR = "linear"
    SINE = "sine"


@dataclass(frozen=True, eq=False)
class ReceptorDistribution:
    """Amplitudes R_u over integer receptor-occupation numbers.

    The constructor checks structure only; use :meth:`normalized` (or
    :func:`pulsesim.scenario.validate_scenario`) to obtain unit norm.
    """

    u_values: np.ndarray
    weights: np.ndarray
    u0: int

    def __post_init__(self):
        u = np.asarray(self.u_values)
        if u.ndim != 1 or u.size == 0:
            raise ScenarioError("distribution.u_values", "empty distribution")
        if not np.all(np.equal(np.mod(u, 1), 0)):
            raise ScenarioError("distribution.u_values", "receptor numbers must be integers")
        u = u.astype(np.int64)
        if np.any(np.diff(u) <= 0):
            raise ScenarioError("distribution.u_values", "u grid not increasing")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != u.shape:
            raise ScenarioError(
                "distribution.weights",
                f"expected {u.size} weights, got {w.size}",
            )
        if not np.all(np.isfinite(w)):
            raise ScenarioError("distribution.weights", "non-finite weight")
        if np.any(w < 0):
            raise ScenarioError("distribution.weights", "amplitudes must be non-negative")
        if int(self.u0) not in set(u.tolist()):
            raise ScenarioError("distribution.u0", f"u0={self.u0} is not a member of u_values")
        object.__setattr__(self, "u_values", _frozen_array(u, np.int64))
        object.__setattr__(self, "weights", _frozen_array(w))
        object.__setattr__(self, "u0", int(self.u0))

    @cached_property
    def is_normalized(self) -> bool:
        return abs(squared_norm(self.weights) - 1.0) <= NORM_TOL

    def normalized(self) -> "ReceptorDistribution":
        try:
            w = normalize_distribution(self.weights)
        except DegenerateDistributionError as exc:
            raise ScenarioError("distribution.weights", str(exc)) from None
        return replace(self, weights=w)


@dataclass(frozen=True, eq=False)
class ComposedPrior:
    """Physiological amplitudes P_{u'} on the conscious-prior grid.

    ``raw_weights`` keeps the un-normalized sum over receptor numbers;
    ``weights`` is the unit-norm version used for selection.
    """

    u_values: np.ndarray
    weights: np.ndarray
    raw_weights: np.ndarray

    def __post_init__(self):
        for name in ("u_values", "weights", "raw_weights"):
            object.__setattr__(self, name, _frozen_array(getattr(self, name)))

    @cached_property
    def is_normalized(self) -> bool:
        return abs(squared_norm(self.weights) - 1.0) <= NORM_TOL


Interaction = Union[ReceptorDistribution, ComposedPrior]


@dataclass(frozen=True)
class StimulusProfile:
    """Classical stimulus. The primed branch ramps from 0 at t=0 to full at ``rise_time``."""

    amplitude_sq: float = 1.0
    rise_time: float = 0.1
    ramp: Ramp = Ramp.LINEAR

    def __post_init__(self):
        if not (math.isfinite(self.amplitude_sq) and self.amplitude_sq >= 0):
            raise ScenarioError("stimulus.amplitude_sq", "must be a finite value >= 0")
        if not (math.isfinite(self.rise_time) and self.rise_time > 0):
            raise ScenarioError("stimulus.rise_time", "must be > 0")
        object.__setattr__(self, "ramp", Ramp(self.ramp))

    def ramp_amplitude(self, t: float) -> float:
        """Primed-branch amplitude fraction r(t), clamped to [0, 1]."""
        x = min(max(t / self.rise_time, 0.0), 1.0)
        if self.ramp is Ramp.LINEAR:
            return x
        return math.sin(0.5 * math.pi * x)

    def branch_weights(self, t: float) -> tuple[float, float]:
        """(pre-interaction, primed) squared weight fractions at time ``t``."""
        r2 = self.ramp_amplitude(t) ** 2
        return 1.0 - r2, r2

    def hit_time(self, v: float) -> float:
        """Invert the hit-time CDF r(t)^2 at ``v`` in (0, 1]."""
        if not 0.0 < v <= 1.0:
            raise ContractError(f"hit-time quantile must lie in (0, 1], got {v}")
        if self.ramp is Ramp.LINEAR:
            return self.rise_time * math.sqrt(v)
        return self.rise_time * (2.0 / math.pi) * math.asin(math.sqrt(v))


@dataclass(frozen=True, eq=False)
class Pulse:
    """Normalized neighbourhood of states around ``center``."""

    center: float
    u_grid: np.ndarray
    weights: np.ndarray
    kind: PulseKind = PulseKind.BRAIN

    def __post_init__(self):
        grid = np.asarray(self.u_grid, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if grid.ndim != 1 or grid.shape != w.shape or grid.size == 0:
            raise ContractError("pulse grid and weights must be equal-length 1-D arrays")
        if np.any(np.diff(grid) <= 0):
            raise ContractError("pulse grid must be strictly increasing")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ContractError("pulse weights must be finite and non-negative")
        if abs(float(np.dot(w, w)) - 1.0) > NORM_TOL:
            raise ContractError(f"pulse not normalized: sum w^2 = {float(np.dot(w, w))!r}")
        # keep caller's array object when already frozen so twin pulses can share it
        if not (isinstance(self.weights, np.ndarray) and not self.weights.flags.writeable
                and self.weights.dtype == float):
            object.__setattr__(self, "weights", _frozen_array(w))
        if not (isinstance(self.u_grid, np.ndarray) and not self.u_grid.flags.writeable
                and self.u_grid.dtype == float):
            object.__setattr__(self, "u_grid", _frozen_array(grid))
        object.__setattr__(self, "kind", PulseKind(self.kind))
        object.__setattr__(self, "center", float(self.center))

    @property
    def weights_sq(self) -> np.ndarray:
        return self.weights * self.weights


@dataclass(frozen=True)
class PulseKernel:
    """Dissolution weights F(u' - u) of a chosen state into its pulse.

    The default profile is a discretised Gaussian amplitude
    ``exp(-d^2 / (4 sigma^2))``, square-normalized. ``profile`` may carry a
    custom symmetric amplitude list of length ``2*support_radius + 1``.
    """

    sigma: float = 1.0
    support_radius: int = 3
    profile: Optional[tuple] = None

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ScenarioError("kernel.sigma", "must be > 0")
        if int(self.support_radius) != self.support_radius or self.support_radius < 1:
            raise ScenarioError("kernel.support_radius", "must be an integer >= 1")
        object.__setattr__(self, "support_radius", int(self.support_radius))
        if self.profile is not None:
            prof = tuple(float(x) for x in self.profile)
            if len(prof) != 2 * self.support_radius + 1:
                raise ScenarioError(
                    "kernel.profile",
                    f"expected {2 * self.support_radius + 1} entries, got {len(prof)}",
                )
            if any(x < 0 or not math.isfinite(x) for x in prof):
                raise ScenarioError("kernel.profile", "entries must be finite and >= 0")
            if not np.allclose(prof, prof[::-1], rtol=0, atol=1e-12):
                raise ScenarioError("kernel.profile", "profile must be symmetric")
            if not any(prof):
                raise ScenarioError("kernel.profile", "all entries are zero")
            object.__setattr__(self, "profile", prof)

    def offsets(self) -> np.ndarray:
        return np.arange(-self.support_radius, self.support_radius + 1)

    def raw_amplitudes(self, grid_step: float = 1.0) -> np.ndarray:
        """Kernel amplitudes before normalization (custom profiles are returned as given)."""
        if self.profile is not None:
            return np.array(self.profile)
        d = self.offsets() * float(grid_step)
        return np.exp(-(d * d) / (4.0 * self.sigma * self.sigma))

    def amplitudes(self, grid_step: float = 1.0) -> np.ndarray:
        """Square-normalized amplitudes on the offsets; the returned array is read-only and shared."""
        return _kernel_amplitudes(self, float(grid_step))


@lru_cache(maxsize=256)
def _kernel_amplitudes(kernel: PulseKernel, grid_step: float) -> np.ndarray:
    w = normalize_distribution(kernel.raw_amplitudes(grid_step))
    w.setflags(write=False)
    return w


@dataclass(frozen=True)
class DriftParams:
    kappa: float = 0.1
    lambda_: float = 0.0
    dt: float = 1.0
    max_steps: int = 10_000
    capacity_u: float = math.inf
    convergence_eps: float = 1e-12

    def __post_init__(self):
        for name in ("kappa", "lambda_", "dt", "convergence_eps"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ScenarioError(f"drift.{name.rstrip('_')}", "must be a finite value >= 0")
        if self.dt <= 0:
            raise ScenarioError("drift.dt", "must be > 0")
        if self.convergence_eps <= 0:
            raise ScenarioError("drift.convergence_eps", "must be > 0")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ScenarioError("drift.max_steps", "must be an integer >= 1")
        object.__setattr__(self, "max_steps", int(self.max_steps))

    def check_cfl(self, max_pain_gap: float, max_potential_gap: float) -> None:
        """Reject steps that could drive a squared weight negative."""
        pain = self.dt * self.kappa * max_pain_gap
        if pain >= 1.0:
            raise ScenarioError(
                "drift.dt",
                f"CFL violation: dt*kappa*max_pain_gap = {pain:g} >= 1",
            )
        restore = self.dt * self.lambda_ * max_potential_gap
        if restore >= 1.0:
            raise ScenarioError(
                "drift.dt",
                f"CFL violation: dt*lambda*max_potential_gap = {restore:g} >= 1",
            )


@dataclass(frozen=True, eq=False)
class SystemState:
    """Two-branch state: pre-interaction branch plus the ramping interaction branch."""

    phase: Phase
    pre_branch_weight_sq: float
    interaction: Interaction
    brain_pulse: Optional[Pulse] = None
    phys_pulse: Optional[Pulse] = None
    t: float = 0.0
    collapse: Optional["CollapseOutcome"] = None
    stimulus: StimulusProfile = field(default_factory=StimulusProfile)

    def __post_init__(self):
        object.__setattr__(self, "phase", Phase(self.phase))
        if not 0.0 <= self.pre_branch_weight_sq <= 1.0:
            raise ContractError("pre_branch_weight_sq must lie in [0, 1]")
        pulses = (self.brain_pulse, self.phys_pulse)
        if self.phase in (Phase.PRE_HIT, Phase.COLLAPSED):
            if any(p is not None for p in pulses):
                raise ContractError(f"phase {self.phase.value} cannot carry pulses")
        else:
            if any(p is None for p in pulses):
                raise ContractError(f"phase {self.phase.value} requires both pulses")
            b, p = pulses
            if not (np.array_equal(b.u_grid, p.u_grid) and np.array_equal(b.weights, p.weights)):
                raise ContractError("brain and physiological pulses must be identical")
        if self.phase is not Phase.PRE_HIT and self.collapse is None:
            raise ContractError(f"phase {self.phase.value} requires a collapse outcome")


def initial_state(interaction: Interaction, stimulus: Optional[StimulusProfile] = None) -> SystemState:
    """State at t = 0, where the primed branch has zero weight."""
    return SystemState(
        phase=Phase.PRE_HIT,
        pre_branch_weight_sq=1.0,
        interaction=interaction,
        t=0.0,
        stimulus=stimulus or StimulusProfile(),
    )
