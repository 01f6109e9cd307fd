"""Seed handling: one global seed, independent named sub-streams.

Every stochastic component pulls its generator from ``substream(seed, name)``
so that components can be re-seeded independently and two runs with the same
global seed are bit-identical.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stream_key(name: str) -> int:
    """Stable 64-bit key for a stream name (independent of PYTHONHASHSEED)."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for the named sub-stream of the given global seed."""
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK64, stream_key(name)]))
