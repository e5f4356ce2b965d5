"""Pinned pseudo-random generator for weight and surrogate-feature init.

numpy's generators are fine for tests, but seeded weights must be
reproducible from a written description alone, so the stream here is
fully specified:

* stream seed  = splitmix64(seed XOR fnv1a64(name))
* generator    = xorshift64* (shifts 12, 25, 27; multiplier 0x2545F4914F6CDD1D)
* uniform(a,b) = a + (b - a) * (next() >> 11) / 2**53
"""

import numpy as np

_MASK = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_XS_MULT = 0x2545F4914F6CDD1D


def fnv1a64(text):
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK
    return h


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


class XorShift64Star:
    def __init__(self, seed, name=""):
        state = splitmix64((int(seed) & _MASK) ^ fnv1a64(name))
        # xorshift has an all-zero fixed point
        self.state = state or 0x9E3779B97F4A7C15

    def next_u64(self):
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self.state = x
        return (x * _XS_MULT) & _MASK

    def uniform(self, low, high, size):
        """Return ``size`` doubles in ``[low, high)`` as a float64 array."""
        n = int(np.prod(size, dtype=np.int64))
        out = np.empty(n, dtype=np.float64)
        scale = 1.0 / (1 << 53)
        for i in range(n):
            out[i] = (self.next_u64() >> 11) * scale
        return (low + (high - low) * out).reshape(size)
