"""
src/infrastructure/streams.py

Counter-based random substreams.

Every stream is a :class:`numpy.random.Generator` over the Philox4x64
counter-based bit generator, keyed by a 128-bit BLAKE2b digest of
``(master_seed, domain_tag, indices...)``.  The key alone determines the
stream, so a cell processed by any worker, in any order, draws the same
numbers.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_MAX_SEED = 2**64


class SeedError(Exception):
    """Raised when a master seed is outside the unsigned 64-bit range."""


def _validate_seed(master_seed: int) -> int:
    seed = int(master_seed)
    if not 0 <= seed < _MAX_SEED:
        raise SeedError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    return seed


def stream_key(master_seed: int, domain_tag: str, *indices: int) -> int:
    """128-bit Philox key derived from the full stream address."""
    seed = _validate_seed(master_seed)
    address = ":".join([str(seed), domain_tag, *(str(int(i)) for i in indices)])
    digest = hashlib.blake2b(address.encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def seed_substream(master_seed: int, domain_tag: str, *indices: int) -> np.random.Generator:
    """Return the random stream addressed by (master_seed, domain_tag, indices)."""
    key = stream_key(master_seed, domain_tag, *indices)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SubstreamFactory:
    """Binds a master seed and a domain tag; hands out indexed substreams."""

    master_seed: int
    tag: str

    def __post_init__(self) -> None:
        _validate_seed(self.master_seed)

    def stream(self, *indices: int) -> np.random.Generator:
        """Substream for the index tuple *indices* (e.g. ``(step, cell)``)."""
        return seed_substream(self.master_seed, self.tag, *indices)

    def child(self, tag: str) -> SubstreamFactory:
        """Factory for a nested domain, e.g. ``"replica-3/kac"``."""
        return SubstreamFactory(self.master_seed, f"{self.tag}/{tag}")
