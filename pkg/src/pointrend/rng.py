"""xoshiro256** pseudo-random generator seeded through splitmix64.

Point sampling draws from this generator so that sequences are defined by
the algorithm alone and not by any library version. Bulk Gaussian noise and
weight initialisation use numpy generators seeded from :func:`derive_seed`.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """xoshiro256** (Blackman & Vigna) with a splitmix64 seeder."""

    def __init__(self, seed: int):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform_array(self, n: int) -> np.ndarray:
        # inlined loop; this is the hot path of the training sampler
        s0, s1, s2, s3 = self._s
        out = np.empty(n, dtype=np.float64)
        m = _MASK
        scale = 1.0 / 9007199254740992.0
        for i in range(n):
            r = ((s1 * 5) & m)
            r = ((((r << 7) | (r >> 57)) & m) * 9) & m
            out[i] = (r >> 11) * scale
            t = (s1 << 17) & m
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & m
        self._s = [s0, s1, s2, s3]
        return out

    def uniform_points(self, n: int) -> np.ndarray:
        """``n`` points in [0,1)^2; each point draws x then y."""
        return self.uniform_array(2 * n).reshape(n, 2)

    def randbelow(self, n: int) -> int:
        """Unbiased integer in [0, n) by rejection on the top bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        bits = max(1, (n - 1).bit_length())
        while True:
            v = self.next_u64() >> (64 - bits)
            if v < n:
                return v


def derive_seed(*parts: int) -> int:
    """Mix integers into one 64-bit seed (splitmix64 chained over the parts)."""
    state = 0x5EED
    out = 0
    for p in parts:
        state, out = splitmix64((state ^ (int(p) & _MASK)) & _MASK)
    return out


def numpy_rng(*parts: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(*parts)))
