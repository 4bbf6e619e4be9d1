"""Per-trial random streams derived from (master_seed, trial_index).

Each trial gets a Philox counter-based generator keyed by the master seed,
with the trial index placed in the top word of the 256-bit counter. Streams
of different trials are therefore disjoint and independent of execution order.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

MAX_SEED = 2**64 - 1
_INV_2_53 = 1.0 / 2**53


class ReproducibilityError(RuntimeError):
    """A random stream ran out of draws. Streams are never silently reseeded."""


class TrialStream:
    """Uniform draws on [0, 1) for one trajectory.

    ``budget`` caps the number of draws (None means unbounded); exceeding it
    raises :class:`ReproducibilityError`.
    """

    def __init__(self, master_seed: int, trial_index: int, budget: Optional[int] = None):
        if not 0 <= master_seed <= MAX_SEED:
            raise ValueError(f"master seed must lie in [0, 2**64), got {master_seed}")
        if not 0 <= trial_index <= MAX_SEED:
            raise ValueError(f"trial index must lie in [0, 2**64), got {trial_index}")
        self.master_seed = int(master_seed)
        self.trial_index = int(trial_index)
        self.budget = budget
        self.draws = 0
        self._bitgen = np.random.Philox(key=self.master_seed, counter=[0, 0, 0, self.trial_index])

    def uniform(self) -> float:
        if self.budget is not None and self.draws >= self.budget:
            raise ReproducibilityError(
                f"random stream for trial {self.trial_index} exhausted after {self.draws} draws"
            )
        self.draws += 1
        # top 53 bits of one 64-bit Philox output
        return (int(self._bitgen.random_raw()) >> 11) * _INV_2_53


class ReplayStream:
    """Fixed sequence of uniforms, mostly for tests and replaying recorded draws."""

    def __init__(self, values):
        self._values = list(values)
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= len(self._values):
            raise ReproducibilityError(f"replay stream exhausted after {self._pos} draws")
        value = self._values[self._pos]
        self._pos += 1
        return float(value)
