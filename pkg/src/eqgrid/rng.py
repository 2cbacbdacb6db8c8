"""Named random streams.

Every random draw comes from a stream keyed by ``(seed, entity, purpose)``, so
results do not depend on the order in which entities are processed or on how
work is split between processes.
"""
from __future__ import annotations

import zlib

import numpy as np

GLOBAL = -1


def stream(seed: int, entity: int, purpose: str) -> np.random.Generator:
    """Independent generator for one entity and one purpose tag."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    seq = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(entity) + 1, tag))
    return np.random.Generator(np.random.PCG64(seq))
