"""Deterministic splitmix64-based PRNG used for all randomness in the package.

One generator type everywhere keeps runs bit-reproducible across platforms;
numpy's global RNG is never touched.
"""

from __future__ import annotations

import hashlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix(z: np.ndarray) -> np.ndarray:
    """Finalize splitmix64 state values into output words."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1 & _MASK
    z = (z ^ (z >> np.uint64(27))) * _MIX2 & _MASK
    return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based splitmix64 stream with derived sub-streams."""

    def __init__(self, seed: int):
        self._state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _splitmix((self._state + idx * _GOLDEN) & _MASK)

    def split(self, tag: str) -> "Rng":
        """Derive an independent child stream keyed by a string tag."""
        h = hashlib.sha256(self._state.tobytes() + tag.encode("utf-8")).digest()
        return Rng(int.from_bytes(h[:8], "little"))

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform float64 samples in [0, 1)."""
        n = int(np.prod(shape)) if shape else 1
        u = self._words(n).astype(np.float64) / 2.0**64
        return u.reshape(shape) if shape else float(u[0])

    def normal(self, shape=(), std: float = 1.0) -> np.ndarray:
        """Standard-normal samples via Box-Muller, scaled by std."""
        n = int(np.prod(shape)) if shape else 1
        m = (n + 1) // 2
        u1 = np.maximum(self._words(m).astype(np.float64) / 2.0**64, 1e-300)
        u2 = self._words(m).astype(np.float64) / 2.0**64
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        out *= std
        return out.reshape(shape) if shape else float(out[0])

    def randint(self, lo: int, hi: int, shape=()) -> np.ndarray:
        """Integers in [lo, hi), rejection-free (modulo bias negligible for hi-lo << 2^64)."""
        n = int(np.prod(shape)) if shape else 1
        w = self._words(n) % np.uint64(hi - lo)
        out = w.astype(np.int64) + lo
        return out.reshape(shape) if shape else int(out[0])

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        if n > 1:
            draws = self._words(n - 1)
            for i in range(n - 1, 0, -1):
                j = int(draws[n - 1 - i] % np.uint64(i + 1))
                perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices sampled uniformly from range(n)."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n}")
        return self.permutation(n)[:k]
