"""Named, splittable random streams.

Every consumer derives its own generator from ``(seed, name, *keys)`` so that
adding a new consumer never shifts the draws seen by an existing one.
"""

import zlib

import numpy as np


def substream(seed: int, name: str, *keys: int) -> np.random.Generator:
    tag = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(tag, *map(int, keys)))
    return np.random.Generator(np.random.PCG64(ss))
