"""Counter-based random streams.

Every stream is a Philox generator whose key is derived from a tuple of
integers such as ``(seed, protocol, depth, block)``.  Any block of shots can
therefore be regenerated in isolation and blocks can be produced in any order
or on any worker without changing the result.
"""

from __future__ import annotations

import zlib

import numpy as np

_TAGS: dict[str, int] = {}


def tag(name: str) -> int:
    """Stable 32-bit integer for a string tag."""
    if name not in _TAGS:
        _TAGS[name] = zlib.crc32(name.encode())
    return _TAGS[name]


def stream(seed: int, *keys: int | str) -> np.random.Generator:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        words.append(tag(k) if isinstance(k, str) else int(k))
    ss = np.random.SeedSequence(words)
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def uniform_labels(rng: np.random.Generator, n: int, size) -> np.ndarray:
    """Uniform packed labels over all 4^n Paulis."""
    bits = 2 * n
    if bits == 0:
        return np.zeros(size, dtype=np.uint64)
    raw = rng.integers(0, np.iinfo(np.uint64).max, size=size, dtype=np.uint64, endpoint=True)
    if bits == 64:
        return raw
    return raw & np.uint64((1 << bits) - 1)
