"""Affinity propagation over the anonymization pool.

Cluster sizes drive the sparse/dense proximity choices: clusters are ranked by
member count and candidates are drawn from the smallest or the largest ones.
"""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dataset import SpeakerPool
from .distance import DistanceMetric, pairwise_distances

JITTER = 1e-12


class ClusteringError(ValueError):
    pass


@dataclass
class ClusteringParams:
    """``preference`` is ``"median"`` or a fixed float applied to every point."""

    preference: str | float = "median"
    damping: float = 0.5
    max_iterations: int = 200
    convergence_iterations: int = 15

    def __post_init__(self):
        if not 0.5 <= self.damping < 1.0:
            raise ClusteringError("damping must lie in [0.5, 1)")
        if self.max_iterations < 1 or self.convergence_iterations < 1:
            raise ClusteringError("iteration counts must be positive")
        if self.convergence_iterations > self.max_iterations:
            raise ClusteringError("convergence_iterations must not exceed max_iterations")
        if isinstance(self.preference, str) and self.preference != "median":
            raise ClusteringError(f"unknown preference mode {self.preference!r}")


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    """Exemplar-based partition of ``speaker_ids``.

    ``exemplar_of[i]`` is the point index of the exemplar of point ``i``;
    exemplars map to themselves.
    """

    speaker_ids: tuple[str, ...]
    exemplar_of: np.ndarray
    converged: bool
    iterations_run: int

    def __post_init__(self):
        ex = np.asarray(self.exemplar_of, dtype=np.intp)
        ex.setflags(write=False)
        object.__setattr__(self, "exemplar_of", ex)
        object.__setattr__(self, "speaker_ids", tuple(self.speaker_ids))
        n = len(self.speaker_ids)
        if ex.shape != (n,) or n == 0:
            raise ClusteringError("assignment must cover every point")
        if np.any((ex < 0) | (ex >= n)) or np.any(ex[ex] != ex):
            raise ClusteringError("every exemplar must belong to its own cluster")

    @property
    def exemplars(self) -> np.ndarray:
        return np.unique(self.exemplar_of)

    @property
    def exemplar_ids(self) -> list[str]:
        return [self.speaker_ids[i] for i in self.exemplars]

    @property
    def membership(self) -> dict[str, int]:
        return {s: int(e) for s, e in zip(self.speaker_ids, self.exemplar_of)}

    @property
    def n_clusters(self) -> int:
        return len(self.exemplars)

    def members(self, exemplar: int) -> np.ndarray:
        return np.flatnonzero(self.exemplar_of == exemplar)


def similarity_matrix(pool: SpeakerPool, metric: DistanceMetric) -> np.ndarray:
    """Negative pairwise distances; the diagonal is zeroed and left for the preference."""
    S = -pairwise_distances(metric, pool.embeddings)
    np.fill_diagonal(S, 0.0)
    return S


def median_preference(S) -> float:
    n = S.shape[0]
    if n < 2:
        return 0.0
    return float(np.median(S[~np.eye(n, dtype=bool)]))


def affinity_propagation(similarities, params: ClusteringParams | None = None, seed: int = 0,
                         speaker_ids=None) -> ClusterAssignment:
    """Damped responsibility/availability message passing.

    Every diagonal entry receives the same preference.  A symmetric seeded
    jitter below 1e-12 breaks exact ties.  If no exemplar emerges the result
    is a single cluster around the point with the largest preference.
    """
    params = params or ClusteringParams()
    S = np.array(similarities, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ClusteringError("similarity matrix must be square")
    n = S.shape[0]
    if n == 0:
        raise ClusteringError("similarity matrix is empty")
    ids = [str(i) for i in range(n)] if speaker_ids is None else list(speaker_ids)
    if len(ids) != n:
        raise ClusteringError("speaker_ids must match the matrix size")
    if n == 1:
        return ClusterAssignment(ids, [0], True, 0)

    pref = median_preference(S) if params.preference == "median" else float(params.preference)
    np.fill_diagonal(S, pref)
    rng = np.random.default_rng(seed)
    J = rng.random((n, n))
    S += JITTER * 0.5 * (J + J.T)

    lam = params.damping
    R = np.zeros((n, n))
    A = np.zeros((n, n))
    rows = np.arange(n)
    last = None
    stable = 0
    converged = False
    it = 0
    for it in range(1, params.max_iterations + 1):
        AS = A + S
        best = np.argmax(AS, axis=1)
        first = AS[rows, best]
        AS[rows, best] = -np.inf
        second = AS.max(axis=1)
        Rn = S - first[:, None]
        Rn[rows, best] = S[rows, best] - second
        R = lam * R + (1.0 - lam) * Rn

        Rp = np.maximum(R, 0.0)
        Rp[rows, rows] = R[rows, rows]
        An = Rp.sum(axis=0)[None, :] - Rp
        dA = An[rows, rows].copy()
        An = np.minimum(An, 0.0)
        An[rows, rows] = dA
        A = lam * A + (1.0 - lam) * An

        ex = np.flatnonzero(R[rows, rows] + A[rows, rows] > 0)
        if last is not None and np.array_equal(ex, last):
            stable += 1
        else:
            stable = 0
        last = ex
        if ex.size and stable + 1 >= params.convergence_iterations:
            converged = True
            break

    if last is None or last.size == 0:
        centre = int(np.argmax(np.full(n, pref)))
        return ClusterAssignment(ids, np.full(n, centre), False, it)
    labels = last[np.argmax(S[:, last], axis=1)]
    labels[last] = last
    return ClusterAssignment(ids, labels, converged, it)


def cluster_pool(pool: SpeakerPool, metric: DistanceMetric, params: ClusteringParams | None = None,
                 seed: int = 0) -> ClusterAssignment:
    return affinity_propagation(similarity_matrix(pool, metric), params, seed, pool.speaker_ids)


def rank_clusters_by_size(assignment: ClusterAssignment) -> list[tuple[int, int]]:
    """(exemplar index, member count), largest first, ties by lower exemplar index."""
    ex, counts = np.unique(assignment.exemplar_of, return_counts=True)
    order = sorted(zip(ex.tolist(), counts.tolist()), key=lambda t: (-t[1], t[0]))
    return order


def cluster_genders(assignment: ClusterAssignment, pool: SpeakerPool) -> dict[int, str]:
    """Majority gender of each cluster; a tie takes the exemplar's gender."""
    out = {}
    for e in assignment.exemplars.tolist():
        c = Counter(pool.genders[i] for i in assignment.members(e))
        if c["M"] == c["F"]:
            out[e] = pool.genders[e]
        else:
            out[e] = "M" if c["M"] > c["F"] else "F"
    return out


def format_clusters(assignment: ClusterAssignment) -> str:
    lines = [f"#clusters n={assignment.n_clusters} converged={int(assignment.converged)}"]
    ids = assignment.speaker_ids
    lines += [f"{s} {ids[e]}" for s, e in zip(ids, assignment.exemplar_of)]
    return "\n".join(lines) + "\n"


def save_clusters(assignment: ClusterAssignment, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_clusters(assignment))


def load_clusters(path: str | os.PathLike, pool: SpeakerPool) -> ClusterAssignment:
    """Read a cluster file and index it against ``pool``."""
    index = pool.index_of()
    exemplar = {}
    converged = True
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if line.startswith("#clusters"):
                hdr = dict(t.split("=", 1) for t in line.split()[1:] if "=" in t)
                converged = hdr.get("converged", "1") == "1"
                continue
            if line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ClusteringError(f"line {lineno}: expected '<speaker_id> <exemplar_id>'")
            if parts[0] not in index or parts[1] not in index:
                raise ClusteringError(f"line {lineno}: speaker not in pool")
            exemplar[parts[0]] = index[parts[1]]
    missing = [s for s in pool.speaker_ids if s not in exemplar]
    if missing:
        raise ClusteringError(f"cluster file does not cover pool speaker {missing[0]!r}")
    return ClusterAssignment(pool.speaker_ids, [exemplar[s] for s in pool.speaker_ids],
                             converged, 0)
