"""
Counter-based random streams.

A stream is keyed by the run seed plus any number of integer or string keys
(episode index, voxel index, stage name). The same key always yields the same
Philox generator, independent of scheduling order.
"""

import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _as_int(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError("stream keys must be non-negative")
    return int(key)


def stream(seed: int, *keys: Key) -> np.random.Generator:
    entropy = [_as_int(seed)] + [_as_int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
