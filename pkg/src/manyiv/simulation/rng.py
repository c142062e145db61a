"""Seeded random streams for the simulation designs.

Replication r draws from stream ``mix64(seed, r)``, so results do not depend on
evaluation order. Gaussian variates come from uniforms by Box–Muller.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
# stream index reserved for quantities drawn once per design
DESIGN_INDEX = 1 << 32


def mix64(seed: int, index: int) -> int:
    """SplitMix64 finalizer applied to seed + (index + 1)·γ."""
    z = (seed + (index + 1) * GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class Stream:
    """Uniform and Gaussian draws from one PCG64 stream."""

    def __init__(self, stream_seed: int) -> None:
        self.stream_seed = stream_seed
        self._gen = np.random.Generator(np.random.PCG64(stream_seed))

    @classmethod
    def for_replication(cls, seed: int, rep: int) -> "Stream":
        return cls(mix64(seed, rep))

    @classmethod
    def for_design(cls, seed: int) -> "Stream":
        return cls(mix64(seed, DESIGN_INDEX))

    def uniform(self, size: int | tuple[int, ...]) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size: int | tuple[int, ...]) -> np.ndarray:
        """Box–Muller standard normals."""
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape))
        half = (count + 1) // 2
        u1 = self._gen.random(half)
        u2 = self._gen.random(half)
        radius = np.sqrt(-2.0 * np.log1p(-u1))
        angle = 2.0 * np.pi * u2
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return z[:count].reshape(shape)
