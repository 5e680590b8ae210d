"""Per-run random streams.

Every run owns a counter-based Philox stream keyed by ``(seed, run_id, phase)``,
so the numbers a run consumes do not depend on which other runs share its
batch or on how batches are scheduled across workers.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

# phase identifiers
INIT = 0
MAIN = 1
GROUND_TRUTH = 2
PROJECTIONS = 3
RESAMPLE = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    """A Philox generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


class RunStreams:
    """One generator per run; draws are stacked along a leading run axis."""

    def __init__(self, seed: int, run_ids: Sequence[int], phase: int):
        self.run_ids = list(run_ids)
        self.generators = [stream(seed, rid, phase) for rid in self.run_ids]

    def __len__(self):
        return len(self.generators)

    def normal(self, shape=()) -> np.ndarray:
        return np.stack([g.standard_normal(shape) for g in self.generators])

    def uniform(self, shape=()) -> np.ndarray:
        return np.stack([g.random(shape) for g in self.generators])
