"""Named, reproducible random streams derived from one root seed.

Every source of randomness in a run (per host, per pool, per trial) pulls
its own generator from a SeedTree so that adding a consumer never perturbs
the draws of another.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["SeedTree"]


def _name_key(name: object) -> int:
    if isinstance(name, (int, np.integer)):
        return int(name) & 0xFFFFFFFF
    digest = hashlib.blake2b(str(name).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "big")


class SeedTree:
    """Derives independent numpy generators from a 64-bit root seed.

    Streams are addressed by a tuple of names; the same (seed, names)
    always yields the same generator state.
    """

    def __init__(self, root_seed: int):
        if not 0 <= int(root_seed) < 2**64:
            raise ValueError("root seed must fit in 64 bits")
        self.root_seed = int(root_seed)

    def stream(self, *names: object) -> np.random.Generator:
        key = tuple(_name_key(n) for n in names)
        seq = np.random.SeedSequence(self.root_seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(seq))

    def child(self, *names: object) -> "SeedTree":
        """A subtree rooted at a derived 64-bit seed."""
        sub = self.stream(*names).integers(0, 2**63, dtype=np.int64)
        return SeedTree(int(sub))
