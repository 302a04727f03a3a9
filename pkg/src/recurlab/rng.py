"""Counter-based pseudo-random numbers with documented constants.

Every stream is a pure function of (seed, counter), so results are
reproducible across processes, worker counts and languages.  The mixer is
SplitMix64:

    state_i = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2^64
    z = state_i
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9   (mod 2^64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB   (mod 2^64)
    out_i = z ^ (z >> 31)

Uniform doubles take the top 53 bits: u = (out >> 11) * 2^-53 in [0, 1).

Per-orbit substreams derive their seed as

    orbit_seed = master_seed XOR mix64(orbit_index + 1)

where mix64 is the same finalizer applied to (index + 1) * 0x9E3779B97F4A7C15
(the golden-ratio increment), so orbit streams never depend on scheduling.
"""

from __future__ import annotations

import numpy as np

GOLDEN = 0x9E3779B97F4A7C15
_MASK = 0xFFFFFFFFFFFFFFFF
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_INV53 = 2.0**-53


def mix64(x: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z = x & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def split_seed(master_seed: int, index: int) -> int:
    """Derive the seed of substream `index` from a master seed."""
    return (master_seed ^ mix64(((index + 1) * GOLDEN) & _MASK)) & _MASK


def split_seeds(master_seed: int, indices) -> np.ndarray:
    """Vectorized split_seed over an index array (uint64)."""
    idx = np.asarray(indices, dtype=np.uint64)
    z = (idx + np.uint64(1)) * np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return np.uint64(master_seed) ^ (z ^ (z >> np.uint64(31)))


def raw64(seed: int, counters: np.ndarray | int) -> np.ndarray | int:
    """Vectorized counter-to-word map; `counters` may be any uint64 array."""
    if np.isscalar(counters):
        return mix64((seed + ((int(counters) + 1) * GOLDEN)) & _MASK)
    c = np.asarray(counters, dtype=np.uint64)
    z = np.uint64(seed) + (c + np.uint64(1)) * np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def uniform(seed: int, counters: np.ndarray | int) -> np.ndarray | float:
    """Uniform [0,1) doubles at the given counters."""
    z = raw64(seed, counters)
    if np.isscalar(counters):
        return (z >> 11) * _INV53
    return (z >> np.uint64(11)).astype(np.float64) * _INV53


def uniform_block(seed: int, start: int, count: int) -> np.ndarray:
    """Uniforms at counters start .. start+count-1."""
    return uniform(seed, np.arange(start, start + count, dtype=np.uint64))


class CounterRng:
    """Sequential view over the counter stream (for scalar call sites)."""

    def __init__(self, seed: int, counter: int = 0):
        self.seed = seed & _MASK
        self.counter = counter

    def next_u64(self) -> int:
        z = mix64((self.seed + ((self.counter + 1) * GOLDEN)) & _MASK)
        self.counter += 1
        return z

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def uniforms(self, n: int) -> np.ndarray:
        out = uniform_block(self.seed, self.counter, n)
        self.counter += n
        return out


def bit_tape(seed: int, n_bits: int) -> np.ndarray:
    """A deterministic tape of random bits as uint64 words, MSB-first.

    Bit j of the tape is ``(words[j >> 6] >> (63 - (j & 63))) & 1``.
    """
    n_words = (n_bits + 63) // 64 + 1
    return np.asarray(raw64(seed, np.arange(n_words, dtype=np.uint64)))


def tape_windows(words: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """53-bit windows of a 2-D word tape, as floats in [0, 1).

    `words` has shape (n_orbits, n_words); `offsets` is a 1-D array of bit
    positions.  Returns shape (n_orbits, len(offsets)) with entry
    0.b_{k+1} b_{k+2} ... truncated to 53 bits, where k is the offset.
    """
    offs = np.asarray(offsets, dtype=np.uint64)
    q = (offs >> np.uint64(6)).astype(np.int64)
    o = offs & np.uint64(63)
    hi = words[:, q] << o[None, :]
    lo_shift = (np.uint64(64) - o) & np.uint64(63)
    lo = words[:, q + 1] >> lo_shift[None, :]
    lo = np.where(o[None, :] == 0, np.uint64(0), lo)
    chunk = hi | lo
    return (chunk >> np.uint64(11)).astype(np.float64) * _INV53


def tape_bits(words: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """Individual tape bits (n_orbits, len(positions)) as uint64 0/1."""
    pos = np.asarray(positions, dtype=np.uint64)
    q = (pos >> np.uint64(6)).astype(np.int64)
    o = np.uint64(63) - (pos & np.uint64(63))
    return (words[:, q] >> o[None, :]) & np.uint64(1)
