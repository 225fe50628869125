"""Deterministic per-entity random streams."""

from hashlib import sha256

import numpy as np

_MASK = (1 << 64) - 1
_CLUSTER_TAG = 0x636C7573  # keeps cluster streams disjoint from speaker streams


def stable_hash(text: str) -> int:
    return int.from_bytes(sha256(text.encode("utf-8")).digest()[:8], "little")


def speaker_rng(seed: int, speaker_id: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK, stable_hash(speaker_id)]))


def cluster_rng(seed: int, exemplar: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK, _CLUSTER_TAG, int(exemplar)]))


def index_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & _MASK, int(index)]))
