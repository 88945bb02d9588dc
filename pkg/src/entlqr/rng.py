"""Counter-based random streams.

Every random draw in the package comes from a Philox generator keyed by a
tuple of integers (seed, stream kind, step index), so a given draw can be
reproduced without replaying any other.
"""

import numpy as np


def stream(seed: int, kind: int, step: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, kind, step])))


def replicate_seed(seed: int, replicate: int) -> int:
    """A 32-bit seed for replicate ``replicate`` of an experiment seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, replicate]).generate_state(1)[0])
