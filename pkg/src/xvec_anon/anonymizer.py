"""Pseudo-speaker selection and the perm mapping.

For every source speaker a target gender is resolved, ``N*`` candidate pool
speakers are selected by one of five proximity rules, and their embeddings are
averaged.  All utterances of the speaker are then replaced by that single
pseudo-speaker embedding.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from ._seeding import cluster_rng, speaker_rng
from .clustering import ClusterAssignment, cluster_genders, rank_clusters_by_size
from .dataset import GENDERS, Dataset, SpeakerPool, other_gender, speaker_means
from .distance import DistanceMetric, pairwise_distances
from .plda import PldaModel

PROXIMITIES = ("random", "near", "far", "sparse", "dense")
GENDER_SELECTIONS = ("same", "opposite", "random")


class AnonymizationError(ValueError):
    pass


class PoolWarning(UserWarning):
    """The pool is too small for the requested candidate counts."""


@dataclass(frozen=True)
class AnonymizationConfig:
    metric: str = "plda"
    proximity: str = "far"
    gender_selection: str = "same"
    pool_rank_n: int = 200
    n_star: int = 100
    cluster_top_k: int = 10
    cluster_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.metric not in ("cosine", "plda"):
            raise AnonymizationError(f"unknown metric {self.metric!r}")
        if self.proximity not in PROXIMITIES:
            raise AnonymizationError(f"unknown proximity {self.proximity!r}")
        if self.gender_selection not in GENDER_SELECTIONS:
            raise AnonymizationError(f"unknown gender selection {self.gender_selection!r}")
        if not 1 <= self.n_star <= self.pool_rank_n:
            raise AnonymizationError("need 1 <= n_star <= pool_rank_n")
        if self.cluster_top_k < 1:
            raise AnonymizationError("cluster_top_k must be >= 1")
        if not 0.0 < self.cluster_fraction <= 1.0:
            raise AnonymizationError("cluster_fraction must lie in (0, 1]")

    @property
    def uses_clusters(self) -> bool:
        return self.proximity in ("sparse", "dense")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PseudoSpeakerResult:
    source_speaker_id: str
    target_embedding: np.ndarray
    candidate_ids: tuple[str, ...]
    chosen_gender: str
    chosen_cluster: int | None = None


def make_metric(config: AnonymizationConfig, model: PldaModel | None = None) -> DistanceMetric:
    if config.metric == "plda":
        if model is None:
            raise AnonymizationError("the plda metric needs a PLDA model")
        return DistanceMetric.plda(model)
    return DistanceMetric.cosine()


def resolve_target_gender(source_gender: str, strategy: str, rng: np.random.Generator) -> str:
    if source_gender not in GENDERS:
        raise AnonymizationError(f"invalid gender {source_gender!r}")
    if strategy == "same":
        return source_gender
    if strategy == "opposite":
        return other_gender(source_gender)
    if strategy == "random":
        return "M" if rng.random() < 0.5 else "F"
    raise AnonymizationError(f"unknown gender selection {strategy!r}")


def _gender_subset(pool: SpeakerPool, gender: str) -> np.ndarray:
    idx = pool.gender_indices(gender)
    if idx.size == 0:
        raise AnonymizationError(f"the pool has no speakers of gender {gender}")
    return idx


def _ids(pool, idx):
    return [pool.speaker_ids[i] for i in np.sort(idx)]


def candidates_random(pool: SpeakerPool, gender: str, n_star: int, rng: np.random.Generator) -> list[str]:
    """``n_star`` distinct same-gender pool speakers, uniformly without replacement."""
    idx = _gender_subset(pool, gender)
    if idx.size < n_star:
        warnings.warn(f"only {idx.size} pool speakers of gender {gender}, wanted {n_star}; "
                      "using all of them", PoolWarning, stacklevel=2)
        return _ids(pool, idx)
    return _ids(pool, rng.choice(idx, size=n_star, replace=False))


def rank_window(pool: SpeakerPool, source, metric: DistanceMetric, gender: str, mode: str, N: int) -> list[int]:
    """Pool indices of the N closest (near) or N farthest (far) same-gender speakers.

    Ranking is by ascending distance with ties broken by speaker id.
    """
    idx = _gender_subset(pool, gender)
    dist = pairwise_distances(metric, np.asarray(source)[None, :], pool.embeddings[idx])[0]
    order = sorted(range(idx.size), key=lambda k: (dist[k], pool.speaker_ids[idx[k]]))
    if idx.size < N:
        warnings.warn(f"only {idx.size} pool speakers of gender {gender}, N shrinks from {N}",
                      PoolWarning, stacklevel=3)
        N = idx.size
    if mode == "near":
        window = order[:N]
    elif mode == "far":
        window = order[len(order) - N:]
    else:
        raise AnonymizationError(f"mode must be near or far, got {mode!r}")
    return [int(idx[k]) for k in window]


def candidates_near_far(pool: SpeakerPool, source, metric: DistanceMetric, gender: str, mode: str,
                        N: int, n_star: int, rng: np.random.Generator) -> list[str]:
    if n_star > N:
        raise AnonymizationError(f"n_star={n_star} exceeds N={N}")
    window = rank_window(pool, source, metric, gender, mode, N)
    if len(window) < n_star:
        warnings.warn(f"rank window holds {len(window)} speakers, n_star shrinks from {n_star}",
                      PoolWarning, stacklevel=2)
        n_star = len(window)
    return _ids(pool, rng.choice(np.asarray(window), size=n_star, replace=False))


def eligible_clusters(pool: SpeakerPool, assignment: ClusterAssignment, gender: str, mode: str,
                      top_k: int) -> list[tuple[int, int]]:
    """The ``top_k`` smallest (sparse) or largest (dense) clusters of majority ``gender``."""
    if tuple(assignment.speaker_ids) != tuple(pool.speaker_ids):
        raise AnonymizationError("cluster assignment does not match the pool")
    labels = cluster_genders(assignment, pool)
    ranked = [t for t in rank_clusters_by_size(assignment) if labels[t[0]] == gender]
    if not ranked:
        raise AnonymizationError(f"no cluster has majority gender {gender}")
    if mode == "sparse":
        ranked.sort(key=lambda t: (t[1], t[0]))
    elif mode != "dense":
        raise AnonymizationError(f"mode must be sparse or dense, got {mode!r}")
    if len(ranked) < top_k:
        warnings.warn(f"only {len(ranked)} clusters of gender {gender}, wanted {top_k}",
                      PoolWarning, stacklevel=3)
    return ranked[:top_k]


def _ceil_fraction(fraction, n):
    # guard against 0.3 * 10 = 3.0000000000000004
    return max(1, math.ceil(round(fraction * n, 9)))


def cluster_members_subset(pool: SpeakerPool, assignment: ClusterAssignment, exemplar: int,
                           gender: str, fraction: float, seed: int) -> list[str]:
    """The fixed candidate subset of one cluster for a given seed."""
    members = [i for i in assignment.members(exemplar) if pool.genders[i] == gender]
    k = _ceil_fraction(fraction, len(members))
    chosen = cluster_rng(seed, exemplar).choice(np.asarray(members), size=k, replace=False)
    return _ids(pool, chosen)


def candidates_cluster(pool: SpeakerPool, assignment: ClusterAssignment, gender: str, mode: str,
                       top_k: int, fraction: float, rng: np.random.Generator,
                       seed: int = 0) -> tuple[list[str], int]:
    """Pick one eligible cluster at random and return its fixed member subset.

    The subset depends only on ``(seed, exemplar)``, so every source speaker
    sent to the same cluster averages the same candidates.
    """
    clusters = eligible_clusters(pool, assignment, gender, mode, top_k)
    exemplar = clusters[int(rng.integers(len(clusters)))][0]
    return cluster_members_subset(pool, assignment, exemplar, gender, fraction, seed), exemplar


def pseudo_speaker(pool: SpeakerPool, candidate_ids) -> np.ndarray:
    if len(candidate_ids) == 0:
        raise AnonymizationError("no candidates to average")
    index = pool.index_of()
    try:
        rows = [index[c] for c in candidate_ids]
    except KeyError as exc:
        raise AnonymizationError(f"unknown pool speaker {exc.args[0]!r}") from None
    return pool.embeddings[rows].mean(axis=0)


def anonymize_speaker(source_id: str, source_embedding, source_gender: str, pool: SpeakerPool,
                      config: AnonymizationConfig, assignment: ClusterAssignment | None = None,
                      model: PldaModel | None = None) -> PseudoSpeakerResult:
    source_embedding = np.asarray(source_embedding, dtype=np.float64)
    if source_embedding.shape != (pool.dim,):
        raise AnonymizationError("source embedding and pool dimensions differ")
    rng = speaker_rng(config.seed, source_id)
    gender = resolve_target_gender(source_gender, config.gender_selection, rng)
    cluster = None
    if config.proximity == "random":
        ids = candidates_random(pool, gender, config.n_star, rng)
    elif config.proximity in ("near", "far"):
        ids = candidates_near_far(pool, source_embedding, make_metric(config, model), gender,
                                  config.proximity, config.pool_rank_n, config.n_star, rng)
    else:
        if assignment is None:
            raise AnonymizationError(f"proximity {config.proximity} needs a cluster assignment")
        ids, cluster = candidates_cluster(pool, assignment, gender, config.proximity,
                                          config.cluster_top_k, config.cluster_fraction, rng,
                                          config.seed)
    return PseudoSpeakerResult(source_id, pseudo_speaker(pool, ids), tuple(ids), gender, cluster)


def anonymize_dataset(dataset: Dataset, pool: SpeakerPool, config: AnonymizationConfig,
                      assignment: ClusterAssignment | None = None, model: PldaModel | None = None,
                      workers: int = 1) -> tuple[Dataset, dict[str, PseudoSpeakerResult]]:
    """Map every utterance of a speaker to that speaker's pseudo-speaker."""
    if dataset.dim != pool.dim:
        raise AnonymizationError(f"dataset dim {dataset.dim} != pool dim {pool.dim}")
    if config.uses_clusters and assignment is None:
        raise AnonymizationError(f"proximity {config.proximity} needs a cluster assignment")
    means = speaker_means(dataset)
    gender = dataset.speaker_gender()

    def one(spk):
        return anonymize_speaker(spk, means[spk], gender[spk], pool, config, assignment, model)

    speakers = list(means)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = dict(zip(speakers, ex.map(one, speakers)))
    else:
        results = {s: one(s) for s in speakers}
    emb = np.vstack([results[s].target_embedding for s in dataset.speaker_ids])
    genders = [results[s].chosen_gender for s in dataset.speaker_ids]
    return dataset.replace(embeddings=emb, genders=genders), results


def format_mapping(results: dict[str, PseudoSpeakerResult]) -> str:
    return "".join(
        f"{s} {r.chosen_gender} {len(r.candidate_ids)} {','.join(r.candidate_ids)}\n"
        for s, r in results.items()
    )


def save_mapping(results: dict[str, PseudoSpeakerResult], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_mapping(results))


def load_mapping(path: str | os.PathLike) -> dict[str, tuple[str, list[str]]]:
    """speaker_id -> (chosen gender, candidate ids)."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4 or int(parts[2]) != len(parts[3].split(",")):
                raise AnonymizationError(f"line {lineno}: malformed mapping record")
            out[parts[0]] = (parts[1], parts[3].split(","))
    return out
