"""Velocity uncertainty and transport spread of a seed molecule.

One-dimensional estimates: the minimal velocity uncertainty of a molecule of
classical size, the displacement it accumulates while carried by the fluid,
and how many receptor sites that displacement spans.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

HBAR = 1.054571817e-34  # J s
DALTON = 1.66053906660e-27  # kg
# Delta v = UNCERTAINTY_FACTOR * hbar / (m * width); 0.5 gives the hbar/2 convention
UNCERTAINTY_FACTOR = 1.0

DEFAULT_MASS_U = 10_000.0
DEFAULT_WIDTH_M = 10e-9
DEFAULT_ELAPSED_S = 0.1
DEFAULT_RECEPTOR_SPACING_M = 1e-6


@dataclass(frozen=True)
class SeedMolecule:
    mass: float = DEFAULT_MASS_U  # atomic mass units
    classical_width: float = DEFAULT_WIDTH_M  # metres

    def __post_init__(self):
        if not (math.isfinite(self.mass) and self.mass > 0):
            raise ValueError(f"mass must be > 0, got {self.mass}")
        if not (math.isfinite(self.classical_width) and self.classical_width > 0):
            raise ValueError(f"classical_width must be > 0, got {self.classical_width}")

    @property
    def mass_kg(self) -> float:
        return self.mass * DALTON


@dataclass(frozen=True)
class SpreadResult:
    delta_v: float  # m/s
    spread_length: float  # m
    receptors_covered: int
    elapsed: float  # s


def heisenberg_velocity_uncertainty(mol: SeedMolecule, factor: float = UNCERTAINTY_FACTOR) -> float:
    """Minimal one-direction velocity uncertainty in m/s."""
    return factor * HBAR / (mol.mass_kg * mol.classical_width)


def positional_spread(delta_v: float, elapsed: float) -> float:
    if elapsed < 0:
        raise ValueError(f"elapsed time must be >= 0, got {elapsed}")
    if delta_v < 0:
        raise ValueError(f"delta_v must be >= 0, got {delta_v}")
    return delta_v * elapsed


def receptor_coverage(spread_length: float, receptor_spacing: float) -> int:
    """Receptor sites spanned by ``spread_length``, counting the starting site."""
    if not receptor_spacing > 0:
        raise ValueError(f"receptor spacing must be > 0, got {receptor_spacing}")
    if spread_length < 0:
        raise ValueError(f"spread length must be >= 0, got {spread_length}")
    # tolerate representation error when the spread is an exact multiple of the spacing
    return math.floor(spread_length / receptor_spacing * (1.0 + 1e-12)) + 1


def seed_spread(
    mol: SeedMolecule = SeedMolecule(),
    elapsed: float = DEFAULT_ELAPSED_S,
    receptor_spacing: float = DEFAULT_RECEPTOR_SPACING_M,
    factor: float = UNCERTAINTY_FACTOR,
) -> SpreadResult:
    dv = heisenberg_velocity_uncertainty(mol, factor)
    length = positional_spread(dv, elapsed)
    return SpreadResult(dv, length, receptor_coverage(length, receptor_spacing), elapsed)


def default_grid_width() -> int:
    """Receptor-number span implied by the default molecule, 0.1 s and 1 um spacing."""
    return seed_spread().receptors_covered
