"""Counter-based random streams keyed by (master seed, purpose, indices).

Every stochastic piece of work derives its own Philox stream from a tuple of
keys, so results do not depend on execution order or worker count.
"""
import zlib

import numpy as np


def _key(k):
    if isinstance(k, (bool, np.bool_)):
        return int(k)
    if isinstance(k, (int, np.integer)):
        if k < 0:
            raise ValueError("stream keys must be non-negative")
        return int(k)
    # floats and strings go through a stable text hash
    return zlib.crc32(repr(k).encode()) if not isinstance(k, str) else zlib.crc32(k.encode())


def seed_sequence(master_seed, *keys):
    return np.random.SeedSequence(entropy=_key(master_seed), spawn_key=tuple(_key(k) for k in keys))


def stream(master_seed, *keys) -> np.random.Generator:
    """Independent generator for ``(master_seed, *keys)``."""
    return np.random.Generator(np.random.Philox(seed_sequence(master_seed, *keys)))

