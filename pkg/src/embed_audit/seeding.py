"""Named random sub-streams derived from one master seed.

Every consumer asks for a stream by name, so adding a new consumer never
shifts the draws seen by existing ones.
"""

import hashlib

import numpy as np

from .errors import InvalidArgument


def _name_key(name):
    digest = hashlib.sha256(str(name).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def _sequence(seed, names):
    if int(seed) < 0:
        raise InvalidArgument(f"seed must be non-negative, got {seed}", field="seed")
    return np.random.SeedSequence([int(seed), *(_name_key(n) for n in names)])


def substream(seed, *names):
    """Return a Generator for the sub-stream ``names`` of ``seed``."""
    return np.random.default_rng(_sequence(seed, names))


def derive_seed(seed, *names):
    """Return a non-negative 63-bit integer seed for the named sub-stream."""
    state = _sequence(seed, names).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))
