"""Counter-based random streams.

Every random draw in the package comes from a generator built here from an
explicit 64-bit seed plus a tuple of integer keys (niche, generation, role,
...). Streams with different keys are statistically independent, and a stream
never depends on how many draws were taken from any other stream, so parallel
workers can reproduce a serial run exactly.
"""

from __future__ import annotations

import numpy as np

MAX_SEED = 2**64 - 1

# Role tags used as the last key component.
INIT = 0
VARIATION = 1
PERMUTATION = 2
SAMPLES = 3
NOISE = 4
FOLDS = 5
AUGMENT = 6
PEERS = 7


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator addressed by ``(seed, *key)``."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *key: int) -> int:
    """Derive a child 64-bit seed, e.g. one per replicate of an experiment."""
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
