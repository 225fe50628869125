"""Seeded synthetic speaker populations drawn from the PLDA generative model.

Speaker means are ``m + between_scale * y`` (or ``m + V y``) and utterances
add ``within_scale * z`` (or ``D z``).  Male speakers are shifted by a fixed
offset of length ``between_scale`` along the all-ones direction, so the two
genders form separate clouds.  The offset depends only on ``dim``, which lets
independently seeded populations (training data, pool, evaluation speakers)
share one embedding space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._seeding import index_rng
from .dataset import Dataset


@dataclass(frozen=True)
class PopulationSpec:
    dim: int
    n_speakers: int
    utterances_per_speaker: int
    between_scale: float = 1.0
    within_scale: float = 0.1
    gender_balance: float = 0.5  # probability that a speaker is male
    seed: int = 0
    prefix: str = "spk"

    def __post_init__(self):
        if self.dim < 1 or self.n_speakers < 1 or self.utterances_per_speaker < 1:
            raise ValueError("dim, n_speakers and utterances_per_speaker must be >= 1")
        if not self.between_scale > 0:
            raise ValueError("between_scale must be positive")
        if self.within_scale < 0:
            raise ValueError("within_scale must be nonnegative")
        if not 0.0 <= self.gender_balance <= 1.0:
            raise ValueError("gender_balance must lie in [0, 1]")


def gender_offset(dim: int, between_scale: float) -> np.ndarray:
    return np.full(dim, between_scale / np.sqrt(dim))


def generate_population(spec: PopulationSpec, V=None, D=None, mean=None) -> Dataset:
    """Sample ``n_speakers * utterances_per_speaker`` utterance records.

    Passing ``V`` (d x q) and/or ``D`` (d x r) replaces the isotropic between-
    and within-speaker terms by explicit loadings.  Each speaker draws from its
    own stream keyed by ``(seed, speaker index)``.
    """
    d, n = spec.dim, spec.utterances_per_speaker
    m = np.zeros(d) if mean is None else np.asarray(mean, dtype=np.float64)
    V = None if V is None else np.asarray(V, dtype=np.float64)
    D = None if D is None else np.asarray(D, dtype=np.float64)
    if m.shape != (d,) or (V is not None and V.shape[0] != d) or (D is not None and D.shape[0] != d):
        raise ValueError("mean, V and D must match dim")
    offset = gender_offset(d, spec.between_scale)
    uids, spks, gens, rows = [], [], [], []
    for i in range(spec.n_speakers):
        rng = index_rng(spec.seed, i)
        gender = "M" if rng.random() < spec.gender_balance else "F"
        if V is None:
            centre = m + spec.between_scale * rng.standard_normal(d)
        else:
            centre = m + V @ rng.standard_normal(V.shape[1])
        if gender == "M":
            centre = centre + offset
        if D is None:
            utts = centre + spec.within_scale * rng.standard_normal((n, d))
        else:
            utts = centre + rng.standard_normal((n, D.shape[1])) @ D.T
        sid = f"{spec.prefix}{i:04d}"
        for j in range(n):
            uids.append(f"{sid}-{j:03d}")
            spks.append(sid)
            gens.append(gender)
        rows.append(utts)
    return Dataset(uids, spks, gens, np.vstack(rows))
