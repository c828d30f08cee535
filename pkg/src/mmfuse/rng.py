"""Deterministic pseudo-random numbers.

The generator is xoshiro256** (Blackman & Vigna) whose 256-bit state is
filled by four successive outputs of splitmix64 started at the seed.
Everything is plain 64-bit integer arithmetic, so the stream can be
reproduced bit-for-bit in any language:

    splitmix64(state):
        state += 0x9E3779B97F4A7C15
        z = state
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

    xoshiro256**:
        result = rotl(s1 * 5, 7) * 9
        t = s1 << 17
        s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3
        s2 ^= t; s3 = rotl(s3, 45)

Uniform doubles take the top 53 bits: ``(x >> 11) * 2**-53``.  Normals use
the Box-Muller transform on pairs of uniforms (cosine branch first).
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state):
    """Return ``(new_state, output)`` for one splitmix64 step."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


def derive_seed(seed, index):
    """Child seed for stream ``index`` of ``seed``.

    Defined as the first splitmix64 output from state
    ``seed ^ splitmix64_output(index)``; used to give each generated
    subject its own independent stream.
    """
    _, mixed_index = splitmix64(index & MASK64)
    _, out = splitmix64((seed ^ mixed_index) & MASK64)
    return out


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class Rng:
    """xoshiro256** stream seeded through splitmix64."""

    def __init__(self, seed):
        state = seed & MASK64
        words = []
        for _ in range(4):
            state, out = splitmix64(state)
            words.append(out)
        self._s = words
        self._spare = None

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self):
        """Uniform double in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low=0.0, high=1.0, size=None):
        if size is None:
            return low + (high - low) * self.random()
        n = int(np.prod(size))
        vals = np.fromiter((self.random() for _ in range(n)), dtype=np.float64, count=n)
        return (low + (high - low) * vals).reshape(size)

    def normal(self, mean=0.0, sigma=1.0, size=None):
        if size is None:
            return mean + sigma * self._gauss()
        n = int(np.prod(size))
        vals = np.fromiter((self._gauss() for _ in range(n)), dtype=np.float64, count=n)
        return (mean + sigma * vals).reshape(size)

    def _gauss(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.random()  # (0, 1], keeps log finite
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def randbelow(self, n):
        """Unbiased integer in [0, n) by rejection."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items):
        """In-place Fisher-Yates shuffle (from the end)."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def bernoulli(self, p):
        return self.random() < p
