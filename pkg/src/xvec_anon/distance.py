"""Cosine and minus-PLDA distances between embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .plda import PldaModel, llr_matrix, plda_distance

METRICS = ("cosine", "plda")


class DistanceError(ValueError):
    pass


@dataclass(frozen=True)
class DistanceMetric:
    """Either ``cosine`` or ``plda`` (the latter carries its model).

    The PLDA variant conditions raw inputs with ``model.transform`` before
    scoring, so callers always pass embeddings in x-vector space.
    """

    kind: str = "cosine"
    model: PldaModel | None = None

    def __post_init__(self):
        if self.kind not in METRICS:
            raise DistanceError(f"unknown metric {self.kind!r}")
        if self.kind == "plda" and self.model is None:
            raise DistanceError("plda metric needs a PldaModel")

    @classmethod
    def cosine(cls) -> "DistanceMetric":
        return cls("cosine")

    @classmethod
    def plda(cls, model: PldaModel) -> "DistanceMetric":
        return cls("plda", model)


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DistanceError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise DistanceError("cosine distance is undefined for a zero vector")
    # normalizing first keeps the result scale-invariant and symmetric
    c = float(np.dot(u / nu, v / nv))
    return 1.0 - min(1.0, max(-1.0, c))


def distance(metric: DistanceMetric, u, v) -> float:
    if metric.kind == "cosine":
        return cosine_distance(u, v)
    m = metric.model
    return plda_distance(m, m.transform(u), m.transform(v))


def _unit_rows(X):
    n = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(n == 0):
        raise DistanceError("cosine distance is undefined for a zero vector")
    return X / n


def pairwise_distances(metric: DistanceMetric, X, Y=None) -> np.ndarray:
    """Matrix of ``distance(metric, X[i], Y[j])``; symmetric when ``Y`` is omitted."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    same = Y is None
    Y = X if same else np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise DistanceError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if metric.kind == "cosine":
        out = 1.0 - np.clip(_unit_rows(X) @ _unit_rows(Y).T, -1.0, 1.0)
    else:
        m = metric.model
        out = -llr_matrix(m, m.transform(X), m.transform(Y))
    if same:
        out = 0.5 * (out + out.T)
    return out
