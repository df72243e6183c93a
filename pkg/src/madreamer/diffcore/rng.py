"""Counter-based random streams.

All stochasticity in the system (weight init, environment resets, latent
noise, exploration, symbol sampling) flows through `Rng` objects built on
numpy's Philox counter-based bit generator.  Streams are derived by name so
adding or removing draws in one subsystem never shifts the noise seen by
another: `rng.split("actions")` always yields the same stream for the same
root seed, regardless of what other splits happened.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_key(label: str) -> int:
    digest = hashlib.blake2s(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


class Rng:
    """Named, splittable random stream (Philox under the hood)."""

    def __init__(self, seed, _key: tuple[int, ...] = ()):
        if isinstance(seed, Rng):
            raise TypeError("pass an integer seed or use .split()")
        self.seed = int(seed)
        self.key = _key
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_key)
        self.gen = np.random.Generator(np.random.Philox(seq))

    def split(self, label: str) -> "Rng":
        """Derive an independent child stream identified by `label`."""
        return Rng(self.seed, _key=self.key + (_label_key(label),))

    def normal(self, shape=(), dtype=np.float32) -> np.ndarray:
        return self.gen.standard_normal(shape, dtype=dtype)

    def uniform(self, shape=(), dtype=np.float32) -> np.ndarray:
        return self.gen.random(shape, dtype=dtype)

    def integers(self, low, high=None, shape=()) -> np.ndarray:
        return self.gen.integers(low, high, size=shape)

    def choice(self, n: int, size: int, replace: bool = True) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, key={self.key})"
