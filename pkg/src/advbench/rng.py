"""Counter-based random numbers keyed by (seed, stream, counter).

Every draw is a pure function of its key, so the value for pixel ``i`` does
not depend on traversal order or how work is split across workers.

The mixing function is the SplitMix64 finalizer:

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

and a key hashes as ``mix(mix(mix(seed) ^ stream) + GOLDEN * (counter + 1))``.
Uniforms take the top 53 bits; normals use Box-Muller on counters ``2i`` and
``2i + 1`` (cosine branch only).
"""

import hashlib

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(value):
    return np.uint64(int(value) & _MASK)


def random_bits(seed, stream, counters):
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = mix64(mix64(_as_u64(seed)) ^ _as_u64(stream))
        return mix64(base + GOLDEN * (counters + np.uint64(1)))


def uniform(seed, stream, counters):
    """Uniform doubles in [0, 1)."""
    bits = random_bits(seed, stream, counters) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / (1 << 53))


def normal(seed, stream, counters):
    """Standard normal draws, one per counter."""
    counters = np.asarray(counters, dtype=np.uint64)
    u1 = 1.0 - uniform(seed, stream, counters * np.uint64(2))  # (0, 1]
    u2 = uniform(seed, stream, counters * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def derive_seed(seed, *path):
    """Stable 63-bit subkey for a named sub-task (e.g. one grid cell).

    Depends only on the master seed and the path components, so adding or
    removing sibling tasks never shifts another task's stream.
    """
    text = "/".join([str(int(seed))] + [str(p) for p in path])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def numpy_rng(seed, *path):
    """A ``np.random.Generator`` seeded from ``derive_seed(seed, *path)``."""
    return np.random.default_rng(derive_seed(seed, *path))
