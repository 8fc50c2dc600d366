"""Splittable deterministic random streams.

Every stochastic object in this package (replica, fragment, block, spine)
owns a private stream keyed by its genealogical path, so a simulation is a
pure function of (master seed, structure).  Keys are 64-bit; child keys are
derived from the parent key and the child's index, never from a global
counter.  That makes realizations stable under refinements that add or
remove *other* branches (e.g. lowering the freezing threshold never changes
the events seen by fragments that were already alive).

The generator is SplitMix64: state walks by a fixed odd gamma and outputs
are the mix64 finalizer of the state.  It is fast in pure Python (a few
integer ops per draw) and batches cheaply through numpy for vector draws.
"""

from bisect import bisect_right
import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_KEY_SALT = 0xA5A5A5A5A5A5A5A5  # keeps the key-derivation domain disjoint from draws

_U64_GAMMA = np.uint64(GOLDEN_GAMMA)
_INV_2_53 = 2.0 ** -53


def mix64(z):
    """SplitMix64 finalizer: bijective avalanche mix of a 64-bit word."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_key(key, index):
    """Key of child `index` (0-based) of the entity keyed by `key`."""
    return mix64(((key ^ _KEY_SALT) + GOLDEN_GAMMA * (index + 1)) & MASK64)


def replica_key(master_seed, replica):
    """Stream key for one replica: a pure function of (master seed, index)."""
    return derive_key(master_seed & MASK64, replica)


class Stream:
    """A single SplitMix64 stream."""

    __slots__ = ("key", "state")

    def __init__(self, key):
        self.key = key & MASK64
        self.state = mix64(self.key)

    def reset(self, key):
        """Re-point this object at a fresh stream (avoids allocation in hot loops)."""
        self.key = key & MASK64
        self.state = mix64(self.key)

    def spawn_key(self, index):
        """Key for the index-th child of this stream's owner."""
        return derive_key(self.key, index)

    def next_u64(self):
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def uniform(self):
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_open(self):
        """Uniform float in (0, 1): rejects the single value 0."""
        u = (self.next_u64() >> 11) * _INV_2_53
        while u == 0.0:
            u = (self.next_u64() >> 11) * _INV_2_53
        return u

    def uniforms(self, n):
        """Vector of n uniforms in [0, 1); advances the state by n steps."""
        steps = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self.state) + _U64_GAMMA * steps
        self.state = int(z[-1]) if n else self.state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)) * _INV_2_53

    def exponential(self, rate):
        """Exponential waiting time with the given rate."""
        if rate <= 0.0:
            raise ValueError(f"exponential rate must be positive, got {rate}")
        return -math.log1p(-self.uniform()) / rate

    def pick(self, cumweights):
        """Index drawn proportionally to weights, given their running sums."""
        u = self.uniform() * cumweights[-1]
        j = bisect_right(cumweights, u)
        return min(j, len(cumweights) - 1)
