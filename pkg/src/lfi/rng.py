"""Seed handling.

Every random draw in the package comes from a PCG64 stream built from an
integer seed plus a tuple of names, so that independent consumers of a
single master seed never share a stream.
"""
import zlib

import numpy as np

_MASK = (1 << 64) - 1


def _key(name):
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    return zlib.crc32(str(name).encode())


def seed_sequence(seed, *names):
    return np.random.SeedSequence(int(seed) & _MASK, spawn_key=tuple(_key(n) for n in names))


def stream(seed, *names):
    """Return a numpy Generator for ``seed`` restricted to the named substream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *names)))


def child_seed(seed, *names):
    """Derive a 63-bit integer seed for a named substream."""
    return int(seed_sequence(seed, *names).generate_state(1, np.uint64)[0] >> np.uint64(1))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
