"""Named, reproducible random streams.

Every consumer of randomness asks for a stream by name ("population",
"noise/estimate", ...). Streams are derived from the root seed and the name
only, so adding a new consumer never shifts the draws of an existing one.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _name_key(name: str) -> tuple[int, ...]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


class Streams:
    """Factory of independent generators keyed by name.

    >>> s = Streams(7)
    >>> a = s.get("noise/estimate").random()
    >>> a == Streams(7).get("noise/estimate").random()
    True
    """

    def __init__(self, seed: int, prefix: str = ""):
        if seed < 0 or seed >= 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.seed = int(seed)
        self.prefix = prefix

    def _path(self, name: str) -> str:
        return f"{self.prefix}/{name}" if self.prefix else name

    def sequence(self, name: str) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=_name_key(self._path(name)))

    def get(self, name: str) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.sequence(name)))

    def child(self, name: str) -> "Streams":
        """Namespace sharing the root seed, e.g. ``streams.child("side/a")``."""
        return Streams(self.seed, self._path(name))

    def split(self, index: int) -> "Streams":
        return self.child(f"#{index}")


def as_streams(seed) -> Streams:
    if isinstance(seed, Streams):
        return seed
    if isinstance(seed, np.random.Generator):
        # borrow 64 bits from the caller's generator; keeps call sites flexible
        return Streams(int(seed.integers(0, 2**63)))
    return Streams(int(seed))
