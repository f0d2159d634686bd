"""Stable hashing and seeded generator helpers.

Everything random in this package flows through :func:`rng_for` so that runs
are bit-reproducible across processes and platforms (``hash()`` is
intentionally avoided: it is salted per interpreter).
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def stable_hash(*parts: object, seed: int = 0) -> int:
    """64-bit BLAKE2b digest of the given parts, keyed by ``seed``."""
    key = (seed & _MASK64).to_bytes(8, "little")
    h = hashlib.blake2b(key=key, digest_size=8)
    for part in parts:
        token = part if isinstance(part, bytes) else str(part).encode("utf-8")
        h.update(len(token).to_bytes(4, "little"))
        h.update(token)
    return int.from_bytes(h.digest(), "little")


def rng_for(*parts: object, seed: int = 0) -> np.random.Generator:
    """A generator deterministically derived from ``parts`` and ``seed``."""
    return np.random.default_rng(stable_hash(*parts, seed=seed))
