"""Detection metrics on verification scores: ROCCH, ROCCH-EER, Cllr and min-Cllr.

The ROC convex hull and the optimal monotone calibration behind min-Cllr are
both read off the same pool-adjacent-violators fit over the merged, sorted,
labelled scores.  Tied scores always share a block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

LN2 = np.log(2.0)


class MetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScoreSet:
    target_scores: np.ndarray
    nontarget_scores: np.ndarray

    def __post_init__(self):
        for name in ("target_scores", "nontarget_scores"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).ravel()
            if not np.all(np.isfinite(arr)):
                raise MetricError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)

    def check(self):
        if self.target_scores.size == 0 or self.nontarget_scores.size == 0:
            raise MetricError("both target and nontarget scores are required")
        return self


class RocchPoint(NamedTuple):
    pfa: float
    pmiss: float


def pav(y, w=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit (pool adjacent violators)."""
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=np.float64)
    means, weights, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        weights.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] >= means[-1]:
            m2, w2, s2 = means.pop(), weights.pop(), sizes.pop()
            wt = weights[-1] + w2
            means[-1] = (means[-1] * weights[-1] + m2 * w2) / wt
            weights[-1] = wt
            sizes[-1] += s2
    return np.repeat(means, sizes)


def _blocks(scores: ScoreSet):
    """Unique scores ascending with target/nontarget counts, pooled by PAV.

    Returns per-PAV-bin (n_target, n_nontarget) integer counts and, for each
    unique score, the fitted target posterior.
    """
    scores.check()
    s = np.concatenate([scores.target_scores, scores.nontarget_scores])
    lab = np.concatenate([np.ones(scores.target_scores.size), np.zeros(scores.nontarget_scores.size)])
    _, inv = np.unique(s, return_inverse=True)
    n_tar = np.bincount(inv, weights=lab).astype(np.int64)
    n_all = np.bincount(inv).astype(np.int64)
    post = pav(n_tar / n_all, n_all)
    bins = []
    start = 0
    for k in range(1, post.size + 1):
        if k == post.size or post[k] != post[start]:
            bins.append((int(n_tar[start:k].sum()), int((n_all - n_tar)[start:k].sum())))
            start = k
    return bins, post, n_tar, n_all


def rocch(scores: ScoreSet) -> list[RocchPoint]:
    """Vertices of the ROC convex hull, pfa ascending (pmiss non-increasing).

    Starts at (0, 1) and ends at (1, 0).
    """
    bins, *_ = _blocks(scores)
    nt, nn = scores.target_scores.size, scores.nontarget_scores.size
    miss, fa = 0, nn
    pts = [RocchPoint(1.0, 0.0)]
    for bt, bn in bins:
        miss += bt
        fa -= bn
        pts.append(RocchPoint(fa / nn, miss / nt))
    return pts[::-1]


def rocch_eer(scores: ScoreSet) -> float:
    """Where the ROC convex hull crosses pmiss = pfa."""
    pts = rocch(scores)
    for (x1, y1), (x2, y2) in zip(pts, pts[1:]):
        g1, g2 = y1 - x1, y2 - x2
        if g1 == 0:
            return x1
        if g1 > 0 > g2:
            t = g1 / (g1 - g2)
            return x1 + t * (x2 - x1)
    return pts[-1].pfa


def cllr(scores: ScoreSet) -> float:
    """Log-likelihood-ratio cost in bits, scores read as natural-log LLRs."""
    scores.check()
    c_tar = np.mean(np.logaddexp(0.0, -scores.target_scores))
    c_non = np.mean(np.logaddexp(0.0, scores.nontarget_scores))
    return float(0.5 * (c_tar + c_non) / LN2)


def pav_llr(scores: ScoreSet) -> tuple[np.ndarray, np.ndarray]:
    """Optimally calibrated (target, nontarget) LLRs; may contain +-inf."""
    _, post, _, _ = _blocks(scores)
    nt, nn = scores.target_scores.size, scores.nontarget_scores.size
    s = np.concatenate([scores.target_scores, scores.nontarget_scores])
    _, inv = np.unique(s, return_inverse=True)
    with np.errstate(divide="ignore"):
        llr_u = np.log(post) - np.log1p(-post) - np.log(nt / nn)
    llr = llr_u[inv]
    return llr[:nt], llr[nt:]


def min_cllr(scores: ScoreSet) -> float:
    """Cllr after the PAV-optimal monotone score-to-LLR mapping."""
    tar, non = pav_llr(scores)
    c_tar = np.mean(np.logaddexp(0.0, -tar))
    c_non = np.mean(np.logaddexp(0.0, non))
    return float(0.5 * (c_tar + c_non) / LN2)
