"""Counter-based random streams.

Every stream is addressed by a tuple of integers (seed, experiment, unit, ...)
and backed by a Philox generator, so any unit of work can be regenerated
independently of the order in which units are visited.
"""
import zlib

import numpy as np


def tag(name):
    """Stable 32-bit integer for a string label."""
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


def stream(*key):
    """Return a Generator keyed by a tuple of nonnegative integers."""
    words = [int(k) & 0xFFFFFFFFFFFFFFFF for k in key]
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(key=ss.generate_state(2, np.uint64)))


def normals(shape, *key):
    return stream(*key).standard_normal(shape)


def tree_sum(parts):
    """Pairwise reduction of a sequence of arrays in a fixed order."""
    parts = [np.asarray(p) for p in parts]
    if not parts:
        raise ValueError("tree_sum of an empty sequence")
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]
