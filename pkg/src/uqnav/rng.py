"""Splittable, counter-based random streams.

Every random draw in the pipeline comes from a Philox generator keyed by
(run seed, path), where path is a tuple of labels and indices.  Streams
derived from the same (seed, path) are identical regardless of call order
or thread scheduling, which is what makes full runs bit-reproducible.
"""

from __future__ import annotations

import zlib

import numpy as np


def _path_component(item) -> int:
    if isinstance(item, str):
        return zlib.crc32(item.encode("utf-8"))
    if isinstance(item, (int, np.integer)):
        value = int(item)
        if value < 0:
            raise ValueError(f"stream path ints must be non-negative, got {value}")
        return value
    raise TypeError(f"stream path items must be str or int, got {type(item)!r}")


def stream(seed: int, *path) -> np.random.Generator:
    """Return the generator for the stream identified by (seed, path)."""
    key = tuple(_path_component(p) for p in path)
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
