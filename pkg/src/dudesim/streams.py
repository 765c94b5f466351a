"""Deterministic random-stream derivation.

Every stochastic component draws from its own substream keyed by
(purpose, entity id).  Substreams are derived through SeedSequence spawn
keys, so adding or removing draws in one component never shifts the
sequence seen by any other: toggling fading, for example, leaves every
per-UE traffic sequence untouched.
"""

import zlib

import numpy as np


def substream(seed: int, purpose: str, entity: int = 0) -> np.random.Generator:
    """Generator for the (purpose, entity) substream of a master seed."""
    key = zlib.crc32(purpose.encode("ascii"))
    seq = np.random.SeedSequence(seed, spawn_key=(key, entity))
    return np.random.default_rng(seq)


class StreamFamily:
    """Lazily-built cache of substreams for one master seed.

    Repeated ``get`` calls with the same key return the same generator
    object, so draw position is preserved across call sites.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[tuple[str, int], np.random.Generator] = {}

    def get(self, purpose: str, entity: int = 0) -> np.random.Generator:
        key = (purpose, entity)
        gen = self._streams.get(key)
        if gen is None:
            gen = substream(self.seed, purpose, entity)
            self._streams[key] = gen
        return gen
