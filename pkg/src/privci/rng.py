"""Reproducible generator derivation for parallel-safe trials."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master_seed: int, *keys) -> int:
    """128-bit seed from a keyed hash of ``keys``, keyed by ``master_seed``."""
    key = int(master_seed).to_bytes(16, "little", signed=True)
    h = hashlib.blake2b(repr(tuple(keys)).encode("utf-8"), key=key, digest_size=16)
    return int.from_bytes(h.digest(), "little")


def derive_rng(master_seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``keys``; the same inputs always give the same stream."""
    return np.random.default_rng(np.random.SeedSequence(derive_seed(master_seed, *keys)))
