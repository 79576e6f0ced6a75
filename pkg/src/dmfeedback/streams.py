"""Per-trajectory random streams.

Every (master seed, trajectory index, channel) triple gets its own Philox
generator keyed through ``SeedSequence``, so no stream is ever derived by
drawing from another one and results do not depend on execution order.
"""

from __future__ import annotations

import numpy as np

OU_A = 0
OU_B = 1
JUMPS = 2
# extra streams used only by coupled time-step refinement
REFINE_A = 3
REFINE_B = 4
REFINE_JUMPS = 5


def make_stream(master_seed: int, index: int, channel: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index), int(channel)])
    return np.random.Generator(np.random.Philox(ss))


def seed_stream(seed) -> np.random.Generator:
    """Generator from a bare integer seed, or pass an existing generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
