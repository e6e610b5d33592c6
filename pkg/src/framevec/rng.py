"""Counter-based random number tape.

Training must be reproducible bit for bit, and the compiled and pure-Python
kernels must consume randomness in exactly the same order.  Both constraints
are easiest to meet with a counter-based generator: the value at position
``i`` of the tape depends only on ``(seed, i)``, so a kernel can be handed a
starting counter, report back how far it advanced, and be replayed at will.

The mixing function is splitmix64; uniforms are the top 53 bits scaled into
[0, 1).  The compiled kernel re-implements the same arithmetic scalar-wise
(see ``_sgd_fast.pyx``); change one and you must change the other.
"""

from __future__ import annotations

import numpy as np

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2POW53 = 2.0 ** -53


def uniforms_at(seed: int, counter: int, n: int) -> np.ndarray:
    """The ``n`` tape values starting at ``counter``, as float64 in [0, 1)."""
    idx = np.arange(n, dtype=np.uint64) + np.uint64(counter & 0xFFFFFFFFFFFFFFFF)
    z = np.uint64(seed & 0xFFFFFFFFFFFFFFFF) + idx * _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)).astype(np.float64) * _INV_2POW53


def uniform_at(seed: int, counter: int) -> float:
    """Single tape value at ``counter``."""
    return float(uniforms_at(seed, counter, 1)[0])


class TapeRng:
    """A position on the tape for a fixed seed.

    Methods advance the counter; kernels that consume the tape directly
    report their final position back via :meth:`seek`.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    def uniforms(self, n: int) -> np.ndarray:
        out = uniforms_at(self.seed, self.counter, n)
        self.counter += n
        return out

    def uniform(self) -> float:
        out = uniform_at(self.seed, self.counter)
        self.counter += 1
        return out

    def permutation(self, n: int) -> np.ndarray:
        """Deterministic shuffle of range(n): argsort of n tape values."""
        keys = self.uniforms(n)
        return np.argsort(keys, kind="stable")

    def seek(self, counter: int) -> None:
        self.counter = int(counter)
