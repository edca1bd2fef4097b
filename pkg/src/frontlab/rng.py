"""Seed management.

A master seed owns one :class:`numpy.random.SeedSequence`.  Replica ``r`` uses
the child sequence with spawn key ``(r,)`` and, inside a replica, named
substreams get fixed sub-keys so that the clock marks, partner choices and
Brownian increments can be re-drawn independently of each other.
"""

from __future__ import annotations

import numpy as np

from frontlab.errors import InvalidArgumentError

SUBSTREAMS = ("clocks", "partners", "brownian", "initial", "coins", "extra")

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise InvalidArgumentError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise InvalidArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def replica_sequence(seed: int, replica: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(check_seed(seed), spawn_key=(int(replica),))


def substream(seed: int, replica: int, name: str) -> np.random.Generator:
    key = SUBSTREAMS.index(name)
    seq = np.random.SeedSequence(check_seed(seed), spawn_key=(int(replica), key))
    return np.random.Generator(np.random.PCG64(seq))


def streams(seed: int, replica: int = 0) -> dict[str, np.random.Generator]:
    return {name: substream(seed, replica, name) for name in SUBSTREAMS}
