"""Seeded random streams.

Every stream is a PCG64 generator seeded through ``numpy.random.SeedSequence``
with an integer key path, e.g. ``Rng(seed, AUGMENT, epoch, index)``.  Keying by
position instead of drawing from one shared stream means the values an image
receives do not depend on which worker process handles it or in what order.
"""

import numpy as np

# stream identifiers used as the first element of a key path
INIT = 1
SHUFFLE = 2
AUGMENT = 3
DROPOUT = 4
TTA = 5
SUBSET = 6
SYNTHETIC = 7
PREVIEW = 8


class Rng:
    """Thin wrapper over ``numpy.random.Generator`` exposing the draws the package needs."""

    def __init__(self, seed=0, *key):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        ss = np.random.SeedSequence(seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *key):
        return Rng(self.seed, *self.key, *key)

    def uniform(self, low, high):
        return float(self._gen.uniform(low, high))

    def bernoulli(self, p):
        return int(self._gen.random() < p)

    def integers(self, low, high):
        """Integer in ``[low, high)``."""
        return int(self._gen.integers(low, high))

    def random(self, size):
        return self._gen.random(size)

    def uniform_array(self, low, high, size):
        return self._gen.uniform(low, high, size)

    def normal_array(self, loc, scale, size):
        return self._gen.normal(loc, scale, size)

    def permutation(self, n):
        return self._gen.permutation(n)

    def choice(self, a, size, replace=False):
        return self._gen.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


class MidpointRng(Rng):
    """Degenerate generator: every uniform returns its midpoint, every Bernoulli returns 0.

    Drives the samplers to the identity parameters; used in tests and for
    identity-view evaluation.
    """

    def __init__(self):
        super().__init__(0)

    def child(self, *key):
        return self

    def uniform(self, low, high):
        return (low + high) / 2.0

    def bernoulli(self, p):
        return 0

    def integers(self, low, high):
        return low + (high - 1 - low) // 2
