"""Scenario documents: parsing, validation and canonical serialization.

A scenario is a JSON object with the sections ``stimulus``, ``distribution``,
``kernel``, ``drift`` and (optionally) ``experiment``. The schema shipped as
``scenario.schema.json`` documents every key. Validation errors carry the
dotted path of the offending field.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

import numpy as np

from .collapse import CollapsePath, compose_conscious_prior
from .dynamics import PainMode, PainProfile, RestoringPotential, pain_profile, restoring_potential
from .seed import default_grid_width
from .state import (
    DriftParams,
    Interaction,
    PulseKernel,
    Ramp,
    ReceptorDistribution,
    ScenarioError,
    StimulusProfile,
    SystemState,
    initial_state,
)

PAINFUL = "painful"
NEUTRAL = "neutral"

_SECTIONS = {"stimulus", "distribution", "kernel", "drift", "experiment"}
_REQUIRED = ("distribution", "kernel", "drift")
_STIMULUS_KEYS = {"amplitude_sq", "rise_time", "ramp"}
_DIST_KEYS = {"u_values", "weights", "u0", "gaussian", "path", "conscious_weights"}
_NEUTRAL_KEYS = {"u_values", "weights", "u0", "gaussian"}
_GAUSS_KEYS = {"sigma", "n_points"}
_KERNEL_KEYS = {"sigma", "support_radius", "grid_step", "profile"}
_DRIFT_KEYS = {
    "kappa", "lambda", "dt", "max_steps", "capacity_u", "convergence_eps",
    "pain", "potential_stiffness",
}
_PAIN_KEYS = {"mode", "slope"}
_EXPERIMENT_KEYS = {"branch_prob", "neutral_distribution"}


def _section(doc: Mapping, key: str, path: str, allowed: set, required: bool = True) -> dict:
    if key not in doc:
        if required:
            raise ScenarioError(f"{path}{key}", "missing section")
        return {}
    sec = doc[key]
    if not isinstance(sec, Mapping):
        raise ScenarioError(f"{path}{key}", "expected an object")
    unknown = sorted(set(sec) - allowed)
    if unknown:
        raise ScenarioError(f"{path}{key}.{unknown[0]}", "unknown key")
    return dict(sec)


def _number(sec: Mapping, key: str, path: str, default=None, allow_none: bool = False) -> Any:
    if key not in sec:
        if default is None and not allow_none:
            raise ScenarioError(path, "missing value")
        return default
    value = sec[key]
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(path, "must be finite")
    return value


def _integer(sec: Mapping, key: str, path: str, default=None) -> int:
    value = _number(sec, key, path, default)
    if int(value) != value:
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    return int(value)


def _number_list(value, path: str) -> list:
    if not isinstance(value, list) or not value:
        raise ScenarioError(path, "empty distribution" if value == [] else "expected a list of numbers")
    for i, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
            raise ScenarioError(f"{path}[{i}]", f"expected a finite number, got {x!r}")
    return list(value)


def gaussian_distribution(u0: int, sigma: float, n_points: int) -> tuple[list, list]:
    """Grid of ``n_points`` receptor numbers around ``u0`` with amplitudes exp(-(u-u0)^2 / (4 sigma^2))."""
    u = [u0 - n_points // 2 + k for k in range(n_points)]
    w = [math.exp(-((x - u0) ** 2) / (4.0 * sigma * sigma)) for x in u]
    return u, w


def _distribution(sec: Mapping, path: str, weights_key: str = "weights") -> ReceptorDistribution:
    if "u0" not in sec:
        raise ScenarioError(f"{path}.u0", "missing value")
    u0 = _integer(sec, "u0", f"{path}.u0")
    if "gaussian" in sec:
        if "u_values" in sec or "weights" in sec:
            raise ScenarioError(f"{path}.gaussian", "give either gaussian or u_values/weights, not both")
        g = _section(sec, "gaussian", f"{path}.", _GAUSS_KEYS)
        sigma = _number(g, "sigma", f"{path}.gaussian.sigma")
        if sigma <= 0:
            raise ScenarioError(f"{path}.gaussian.sigma", "must be > 0")
        n = g.get("n_points")
        n = default_grid_width() if n is None else _integer(g, "n_points", f"{path}.gaussian.n_points")
        if n < 1:
            raise ScenarioError(f"{path}.gaussian.n_points", "must be >= 1")
        u, w = gaussian_distribution(u0, sigma, n)
    else:
        if "u_values" not in sec:
            raise ScenarioError(f"{path}.u_values", "missing value")
        u = _number_list(sec["u_values"], f"{path}.u_values")
        if weights_key not in sec:
            raise ScenarioError(f"{path}.{weights_key}", "missing value")
        w = _number_list(sec[weights_key], f"{path}.{weights_key}")
    try:
        dist = ReceptorDistribution(u, w, u0)
        return dist.normalized()
    except ScenarioError as exc:
        field = exc.path.split(".", 1)[1]
        if field == "weights":
            field = weights_key
        raise ScenarioError(f"{path}.{field}", exc.message) from None


@dataclass(frozen=True, eq=False)
class Scenario:
    """A validated scenario, ready to run."""

    stimulus: StimulusProfile
    distribution: ReceptorDistribution
    conscious_distribution: ReceptorDistribution
    path: CollapsePath
    kernel: PulseKernel
    grid_step: float
    drift: DriftParams
    pain_mode: PainMode
    pain_slope: float
    potential_stiffness: float
    branch_prob: float
    neutral_distribution: ReceptorDistribution
    has_experiment: bool

    # -- construction of run-time objects ---------------------------------

    def interaction(self, branch: str = PAINFUL) -> Interaction:
        if branch == NEUTRAL:
            base = self.neutral_distribution
            prior = self.neutral_distribution
        else:
            base = self.distribution
            prior = self.conscious_distribution
        if self.path is CollapsePath.CONSCIOUS_PRIOR:
            return compose_conscious_prior(prior, self.kernel, self.grid_step)
        return base

    def initial_state(self, branch: str = PAINFUL) -> SystemState:
        return initial_state(self.interaction(branch), self.stimulus)

    @property
    def state(self) -> SystemState:
        return self.initial_state(PAINFUL)

    def pain_for(self, grid, branch: str = PAINFUL) -> PainProfile:
        if branch == NEUTRAL or self.pain_mode is PainMode.NEUTRAL:
            return pain_profile(grid, "neutral")
        return pain_profile(grid, self.pain_mode.value, self.pain_slope)

    def potential_for(self, grid, branch: str = PAINFUL) -> RestoringPotential:
        # the neutral variable carries no seed-supply limit
        if branch == NEUTRAL:
            return RestoringPotential.flat(len(grid))
        return restoring_potential(grid, self.drift.capacity_u, self.potential_stiffness)

    def with_drift(self, **changes) -> "Scenario":
        doc = self.to_document()
        for key, value in changes.items():
            doc["drift"]["lambda" if key == "lambda_" else key] = value
        return validate_scenario(doc)

    # -- serialization -----------------------------------------------------

    def to_document(self) -> dict:
        def dist_doc(d: ReceptorDistribution) -> dict:
            return {"u_values": d.u_values.tolist(), "weights": d.weights.tolist(), "u0": d.u0}

        dist = dist_doc(self.distribution)
        dist["path"] = self.path.value
        if not np.array_equal(self.conscious_distribution.weights, self.distribution.weights):
            dist["conscious_weights"] = self.conscious_distribution.weights.tolist()
        kernel = {
            "sigma": self.kernel.sigma,
            "support_radius": self.kernel.support_radius,
            "grid_step": self.grid_step,
        }
        if self.kernel.profile is not None:
            kernel["profile"] = list(self.kernel.profile)
        d = self.drift
        doc = {
            "stimulus": {
                "amplitude_sq": self.stimulus.amplitude_sq,
                "rise_time": self.stimulus.rise_time,
                "ramp": self.stimulus.ramp.value,
            },
            "distribution": dist,
            "kernel": kernel,
            "drift": {
                "kappa": d.kappa,
                "lambda": d.lambda_,
                "dt": d.dt,
                "max_steps": d.max_steps,
                "capacity_u": d.capacity_u if math.isfinite(d.capacity_u) else None,
                "convergence_eps": d.convergence_eps,
                "pain": {"mode": self.pain_mode.value, "slope": self.pain_slope},
                "potential_stiffness": self.potential_stiffness,
            },
        }
        if self.has_experiment:
            doc["experiment"] = {
                "branch_prob": self.branch_prob,
                "neutral_distribution": dist_doc(self.neutral_distribution),
            }
        return doc

    def digest(self) -> str:
        return document_digest(self.to_document())


def document_digest(doc: Mapping) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canonical.encode()).hexdigest()


def validate_scenario(raw: Mapping) -> Scenario:
    """Check every field of a scenario document and build a :class:`Scenario`.

    Weights are normalized. The drift time step is checked against the
    largest pain and potential gaps on the pulse grid.
    """
    if not isinstance(raw, Mapping):
        raise ScenarioError("$", "scenario must be a JSON object")
    unknown = sorted(set(raw) - _SECTIONS)
    if unknown:
        raise ScenarioError(unknown[0], "unknown section")
    for key in _REQUIRED:
        if key not in raw:
            raise ScenarioError(key, "missing section")

    st = _section(raw, "stimulus", "", _STIMULUS_KEYS, required=False)
    ramp = st.get("ramp", "linear")
    if ramp not in {r.value for r in Ramp}:
        raise ScenarioError("stimulus.ramp", f"unknown ramp {ramp!r}")
    stimulus = StimulusProfile(
        amplitude_sq=_number(st, "amplitude_sq", "stimulus.amplitude_sq", 1.0),
        rise_time=_number(st, "rise_time", "stimulus.rise_time", 0.1),
        ramp=ramp,
    )

    ds = _section(raw, "distribution", "", _DIST_KEYS)
    distribution = _distribution(ds, "distribution")
    path = ds.get("path", CollapsePath.UNCONSCIOUS.value)
    if path not in {p.value for p in CollapsePath}:
        raise ScenarioError("distribution.path", f"unknown path {path!r}")
    if "conscious_weights" in ds:
        if "gaussian" in ds:
            raise ScenarioError("distribution.conscious_weights", "needs explicit u_values")
        conscious = _distribution(ds, "distribution", weights_key="conscious_weights")
    else:
        conscious = distribution

    ks = _section(raw, "kernel", "", _KERNEL_KEYS)
    profile = ks.get("profile")
    if profile is not None:
        profile = tuple(_number_list(profile, "kernel.profile"))
    kernel = PulseKernel(
        sigma=_number(ks, "sigma", "kernel.sigma", 1.0),
        support_radius=_integer(ks, "support_radius", "kernel.support_radius", 3),
        profile=profile,
    )
    grid_step = _number(ks, "grid_step", "kernel.grid_step", 1.0)
    if grid_step <= 0:
        raise ScenarioError("kernel.grid_step", "must be > 0")

    dr = _section(raw, "drift", "", _DRIFT_KEYS)
    for key in ("kappa", "lambda", "dt", "convergence_eps", "potential_stiffness"):
        if key in dr and _number(dr, key, f"drift.{key}") < 0:
            raise ScenarioError(f"drift.{key}", "must be >= 0")
    capacity = _number(dr, "capacity_u", "drift.capacity_u", allow_none=True)
    drift = DriftParams(
        kappa=_number(dr, "kappa", "drift.kappa", 0.1),
        lambda_=_number(dr, "lambda", "drift.lambda", 0.0),
        dt=_number(dr, "dt", "drift.dt", 1.0),
        max_steps=_integer(dr, "max_steps", "drift.max_steps", 10_000),
        capacity_u=math.inf if capacity is None else capacity,
        convergence_eps=_number(dr, "convergence_eps", "drift.convergence_eps", 1e-12),
    )
    pain = _section(dr, "pain", "drift.", _PAIN_KEYS, required=False)
    mode = pain.get("mode", PainMode.LINEAR_DECREASING.value)
    if mode not in (PainMode.LINEAR_DECREASING.value, PainMode.NEUTRAL.value):
        raise ScenarioError("drift.pain.mode", f"unsupported pain mode {mode!r}")
    slope = _number(pain, "slope", "drift.pain.slope", 1.0)
    if mode == PainMode.LINEAR_DECREASING.value and slope <= 0:
        raise ScenarioError("drift.pain.slope", "must be > 0 for linear_decreasing")
    stiffness = _number(dr, "potential_stiffness", "drift.potential_stiffness", 0.0)

    pain_gap = slope * grid_step if mode == PainMode.LINEAR_DECREASING.value else 0.0
    drift.check_cfl(pain_gap, stiffness * grid_step)

    ex = _section(raw, "experiment", "", _EXPERIMENT_KEYS, required=False)
    has_experiment = "experiment" in raw
    branch_prob = _number(ex, "branch_prob", "experiment.branch_prob", 0.5 if has_experiment else 1.0)
    if not 0.0 <= branch_prob <= 1.0:
        raise ScenarioError("experiment.branch_prob", "must lie in [0, 1]")
    if "neutral_distribution" in ex:
        nd = _section(ex, "neutral_distribution", "experiment.", _NEUTRAL_KEYS)
        neutral = _distribution(nd, "experiment.neutral_distribution")
    else:
        neutral = distribution

    return Scenario(
        stimulus=stimulus,
        distribution=distribution,
        conscious_distribution=conscious,
        path=CollapsePath(path),
        kernel=kernel,
        grid_step=float(grid_step),
        drift=drift,
        pain_mode=PainMode(mode),
        pain_slope=float(slope),
        potential_stiffness=float(stiffness),
        branch_prob=float(branch_prob),
        neutral_distribution=neutral,
        has_experiment=has_experiment,
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file. JSON syntax errors surface as :class:`ScenarioError`."""
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from None
    return validate_scenario(raw)


def default_document() -> dict:
    """The bundled beta-experiment scenario."""
    text = resources.files("pulsesim").joinpath("data/beta_default.json").read_text()
    return json.loads(text)


def schema() -> dict:
    return json.loads(resources.files("pulsesim").joinpath("scenario.schema.json").read_text())


def copy_document(doc: Mapping) -> dict:
    return copy.deepcopy(dict(doc))
