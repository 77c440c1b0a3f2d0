"""Deterministic, splittable seeding.

Every stream is keyed by ``(base_seed, tag, index)`` and backed by a Philox
counter-based generator, so per-path randomness does not depend on how paths
are scheduled across workers.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_key(base_seed: int, tag: str, index: int = 0) -> int:
    """128-bit Philox key derived from ``hash(base_seed, tag, index)``."""
    h = hashlib.blake2b(digest_size=16)
    h.update(int(base_seed & MASK64).to_bytes(8, "little"))
    h.update(tag.encode("utf-8"))
    h.update(b"\x00")
    h.update(int(index).to_bytes(8, "little", signed=False))
    return int.from_bytes(h.digest(), "little")


def stream(base_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=derive_key(base_seed, tag, index)))


def seed_digest(base_seed: int, tag: str, n: int) -> str:
    """Digest of the first ``n`` derived keys for ``tag`` (for run manifests)."""
    h = hashlib.sha256()
    for p in range(n):
        h.update(derive_key(base_seed, tag, p).to_bytes(16, "little"))
    return h.hexdigest()
