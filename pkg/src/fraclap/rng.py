"""SplitMix64 stream used for every seeded sample set.

The generator is the standard SplitMix64 recurrence (golden-gamma increment,
two xor-shift-multiply mixing rounds).  Uniform doubles take the top 53 bits,
so sample sets are reproducible across platforms and implementations.
"""

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class SplitMix64:
    def __init__(self, seed=0):
        self.state = np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF)

    def next_u64(self, size):
        """Return the next ``size`` raw 64-bit outputs."""
        size = int(size)
        steps = np.arange(1, size + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = self.state + steps * _GAMMA
            self.state = self.state + np.uint64(size) * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _M1
            z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))

    def uniform(self, low=0.0, high=1.0, size=None):
        """Uniform draws on ``[low, high)``; a float when ``size`` is None."""
        if size is None:
            return float(self.uniform(low, high, 1)[0])
        if np.isscalar(size):
            shape = (int(size),)
        else:
            shape = tuple(int(s) for s in size)
        count = int(np.prod(shape))
        u = (self.next_u64(count) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)
