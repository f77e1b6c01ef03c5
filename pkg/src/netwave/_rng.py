"""Named, seedable random streams.

Every consumer of randomness asks for a stream by name, so that adding
draws in one place never shifts the values seen in another.  A stream is a
PCG64 generator seeded from ``SeedSequence(seed, spawn_key=(crc32(name),))``.
"""
import zlib

import numpy as np


def stream(seed, name):
    key = zlib.crc32(name.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.PCG64(ss))
