"""Seed derivation.

All randomness in a sketcher flows from one 64-bit master seed.  Every
component (sign diagonal, Gaussian diagonal, each permutation, each
orthogonal factor) gets its own generator derived by hashing
``(master_seed, tag, index)``, so adding or reordering components never
shifts the stream of an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1

# splitmix64 constants, shared with the compiled kernel and the numpy
# fallback so both backends emit identical sign streams.
SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_seed(master_seed: int, tag: str, index: int = 0) -> int:
    """Return a 128-bit integer keyed on (master_seed, tag, index).

    Uses blake2b so the derivation is stable across platforms and numpy
    versions; the result is meant to feed ``np.random.SeedSequence``.
    """
    if not 0 <= master_seed <= _MASK64:
        raise ValueError("master seed must fit in 64 bits")
    payload = f"{master_seed}:{tag}:{index}".encode()
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return int.from_bytes(digest, "little")


def derived_rng(master_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Generator for one named component of one seeded object."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(derive_seed(master_seed, tag, index)))
    )


def mix64(z: int) -> int:
    """splitmix64 finalizer on a python int (reference implementation)."""
    z = int(z) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def sign_stream_u64(seed: int, row: int, n_words: int) -> np.ndarray:
    """Counter-based word stream used by the chunked-dense baseline.

    Word ``i`` of row ``r`` is ``mix64(base_r + (i+1)*gamma)`` with
    ``base_r = mix64(seed ^ (r+1)*gamma)``.  Stateless, so any chunking of
    rows reproduces the same matrix.  Vectorized here with wrapping uint64
    arithmetic; the Cython kernel computes the same words scalar-wise.
    """
    gamma = np.uint64(SPLITMIX_GAMMA)
    base = np.uint64(mix64((seed ^ ((row + 1) * SPLITMIX_GAMMA)) & _MASK64))
    counters = base + gamma * np.arange(1, n_words + 1, dtype=np.uint64)
    z = counters
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def sample_without_replacement(
    rng: np.random.Generator, n: int, c: int
) -> np.ndarray:
    """Uniform c-subset of range(n), by Floyd's algorithm.

    O(c) draws regardless of n, so sampling a handful of indices out of
    billions of pairs stays cheap.
    """
    if not 0 <= c <= n:
        raise ValueError(f"cannot pick {c} of {n}")
    chosen: set[int] = set()
    out = np.empty(c, dtype=np.int64)
    for k, j in enumerate(range(n - c, n)):
        t = int(rng.integers(0, j + 1))
        if t in chosen:
            t = j
        chosen.add(t)
        out[k] = t
    return out
