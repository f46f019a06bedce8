"""Random-generator construction.

Philox is counter-based, so streams are cheap to create, reproducible
across platforms, and child streams derived through ``SeedSequence``
are independent of one another.
"""

from __future__ import annotations

import numpy as np


def make_rng(seed) -> np.random.Generator:
    """Philox generator from an integer seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed, n: int) -> list[np.random.Generator]:
    """``n`` independent child generators from one root seed."""
    children = np.random.SeedSequence(int(seed)).spawn(int(n))
    return [np.random.Generator(np.random.Philox(c)) for c in children]
