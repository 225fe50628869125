"""PLDA with eigenvoices and eigenchannels.

An embedding is modelled as ``x = m + V y + D z + e`` with ``y`` shared by all
utterances of a speaker, ``z`` drawn per utterance, both standard normal, and
``e`` isotropic noise of variance ``sigma_floor``.  Between- and within-speaker
covariances are therefore ``V V^T`` and ``D D^T + sigma_floor I``.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import linalg

from .dataset import fmt_vector

logger = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class PldaError(ValueError):
    pass


@dataclass
class TrainingOptions:
    rank_q: int | None = None  # default min(d, 100)
    rank_r: int | None = None  # default d
    max_iterations: int = 100
    log_likelihood_tolerance: float = 1e-6
    center: bool = True
    length_normalize: bool = True
    seed: int = 0
    sigma_floor: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise PldaError("max_iterations must be >= 1")
        if not self.log_likelihood_tolerance > 0:
            raise PldaError("log_likelihood_tolerance must be positive")
        if self.sigma_floor < 0:
            raise PldaError("sigma_floor must be nonnegative")


@dataclass(frozen=True, eq=False)
class PldaModel:
    """Trained PLDA parameters plus the input conditioning used in training.

    Scoring functions take embeddings that are already conditioned; call
    :meth:`transform` on raw embeddings first.
    """

    m: np.ndarray
    V: np.ndarray
    D: np.ndarray
    sigma_floor: float = 1e-6
    center: bool = False
    length_normalize: bool = False
    center_mean: np.ndarray | None = None
    history: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64).ravel()
        V = np.asarray(self.V, dtype=np.float64).reshape(m.size, -1)
        D = np.asarray(self.D, dtype=np.float64).reshape(m.size, -1)
        d = m.size
        if not (1 <= V.shape[1] <= d and 1 <= D.shape[1] <= d):
            raise PldaError(f"need 1 <= q, r <= d={d}; got q={V.shape[1]}, r={D.shape[1]}")
        if self.sigma_floor < 0:
            raise PldaError("sigma_floor must be nonnegative")
        for name, arr in (("m", m), ("V", V), ("D", D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.center_mean is not None:
            cm = np.asarray(self.center_mean, dtype=np.float64).ravel()
            if cm.size != d:
                raise PldaError("center_mean has the wrong dimension")
            cm.setflags(write=False)
            object.__setattr__(self, "center_mean", cm)
        elif self.center:
            raise PldaError("center=True requires center_mean")
        object.__setattr__(self, "center", bool(self.center))
        object.__setattr__(self, "length_normalize", bool(self.length_normalize))

    @property
    def dim(self) -> int:
        return self.m.size

    @property
    def rank_q(self) -> int:
        return self.V.shape[1]

    @property
    def rank_r(self) -> int:
        return self.D.shape[1]

    @cached_property
    def between_cov(self) -> np.ndarray:
        return self.V @ self.V.T

    @cached_property
    def within_cov(self) -> np.ndarray:
        return self.D @ self.D.T + self.sigma_floor * np.eye(self.dim)

    @cached_property
    def _scoring(self):
        """Cholesky factors of the sum/difference covariances and the log-det constant.

        With s = a + b and t = a - b the same-speaker hypothesis gives
        independent Gaussians cov(s) = 2(T + B), cov(t) = 2W, and the
        different-speaker one cov(s) = cov(t) = 2T, where T = B + W.
        """
        sb, sw = self.between_cov, self.within_cov
        tot = sb + sw
        facs = tuple(linalg.cholesky(A, lower=True) for A in (tot, tot + sb, sw))
        ld_t, ld_s, ld_w = (2.0 * np.sum(np.log(np.diag(L))) for L in facs)
        return facs, ld_t - 0.5 * (ld_s + ld_w)

    def transform(self, X) -> np.ndarray:
        """Apply the training-time conditioning to raw embeddings."""
        X = np.asarray(X, dtype=np.float64)
        if self.center:
            X = X - self.center_mean
        if self.length_normalize:
            norms = np.linalg.norm(X, axis=-1, keepdims=True)
            if np.any(norms == 0):
                raise PldaError("zero vector cannot be length-normalized")
            X = X / norms
        return X


def preprocess(embeddings, options: TrainingOptions) -> np.ndarray:
    """Center on the list mean and/or scale rows to unit norm, in that order."""
    X = np.array(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise PldaError("preprocess needs a nonempty (n, d) array")
    if options.center:
        X = X - X.mean(axis=0)
    if options.length_normalize:
        norms = np.linalg.norm(X, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise PldaError(f"zero vector at index {zero[0]} cannot be length-normalized")
        X = X / norms[:, None]
    return X


def _group(labels):
    ids = {}
    idx = np.empty(len(labels), dtype=np.intp)
    for i, s in enumerate(labels):
        idx[i] = ids.setdefault(s, len(ids))
    return idx, len(ids)


class _Stats:
    """Sufficient statistics of centered data for the EM loop."""

    def __init__(self, Xc, spk_idx, n_spk):
        self.N, self.d = Xc.shape
        self.K = Xc.T @ Xc
        self.F = np.zeros((n_spk, self.d))
        np.add.at(self.F, spk_idx, Xc)
        self.counts = np.bincount(spk_idx, minlength=n_spk)


def _e_step(st: _Stats, V, D, sigma):
    """Posterior moments of the speaker factors and the marginal log-likelihood.

    ``Ryy`` sums E[y y^T] over utterances, ``Ry`` averages it over speakers.
    """
    d, q = V.shape
    W = D @ D.T + sigma * np.eye(d)
    W_cho = linalg.cho_factor(W, lower=True)
    logdet_W = 2.0 * np.sum(np.log(np.diag(W_cho[0])))
    WinvV = linalg.cho_solve(W_cho, V)
    VtWinvV = V.T @ WinvV
    VtWinvV = 0.5 * (VtWinvV + VtWinvV.T)

    b = st.F @ WinvV
    y_hat = np.empty_like(b)
    Ryy = np.zeros((q, q))
    Ry = np.zeros((q, q))
    ll = -0.5 * (st.N * d * LOG_2PI + st.N * logdet_W + np.trace(linalg.cho_solve(W_cho, st.K)))
    # speakers with equal utterance counts share the same posterior covariance
    for n in np.unique(st.counts):
        sel = st.counts == n
        k = int(sel.sum())
        L_cho = linalg.cho_factor(np.eye(q) + n * VtWinvV, lower=True)
        Cy = linalg.cho_solve(L_cho, np.eye(q))
        yb = b[sel] @ Cy
        y_hat[sel] = yb
        ll -= k * np.sum(np.log(np.diag(L_cho[0])))
        ll += 0.5 * np.sum(b[sel] * yb)
        Ryy += n * (k * Cy + yb.T @ yb)
        Ry += k * Cy + yb.T @ yb
    return ll, y_hat, Ryy, Ry / len(st.counts)


def _m_step(st: _Stats, y_hat, Ryy, Ry, r, sigma):
    """Closed-form maximizer of the expected complete-data log-likelihood.

    V is the regression of the data on E[y]; D is then the fixed-noise
    factor-analysis fit to the expected within-speaker scatter, i.e. the
    top-r eigenvectors scaled by sqrt(max(lambda - sigma, 0)).  Finally V is
    rescaled by the Cholesky factor of the per-speaker second moment of y
    (minimum-divergence step), which keeps the prior on y standard normal.
    """
    Fy = st.F.T @ y_hat  # sum over utterances of x E[y]^T
    try:
        V = linalg.solve(Ryy, Fy.T, assume_a="pos").T
    except linalg.LinAlgError:
        V = linalg.lstsq(Ryy, Fy.T)[0].T
    Sw = (st.K - V @ Fy.T) / st.N
    Sw = 0.5 * (Sw + Sw.T)
    lam, U = np.linalg.eigh(Sw)
    lam, U = lam[::-1][:r], U[:, ::-1][:, :r]
    D = U * np.sqrt(np.maximum(lam - sigma, 0.0))
    V = V @ np.linalg.cholesky(Ry)
    return V, D


def train_plda(embeddings, speaker_labels, options: TrainingOptions | None = None) -> PldaModel:
    """Fit m, V and D by EM with the channel factors integrated out.

    The returned model's ``history`` holds the marginal log-likelihood
    evaluated before every parameter update plus the final one.
    """
    options = options or TrainingOptions()
    X = np.asarray(embeddings, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise PldaError("embeddings must be a nonempty (n, d) array")
    labels = list(speaker_labels)
    if len(labels) != X.shape[0]:
        raise PldaError("speaker_labels must align with embeddings")
    N, d = X.shape
    spk_idx, n_spk = _group(labels)
    if n_spk < 2:
        raise PldaError("need at least 2 distinct speakers")
    counts = np.bincount(spk_idx)
    if counts.max() < 2:
        raise PldaError("need at least one speaker with 2 or more utterances")
    q = min(d, 100) if options.rank_q is None else options.rank_q
    r = d if options.rank_r is None else options.rank_r
    if not 1 <= q <= d:
        raise PldaError(f"rank_q={q} must be in [1, d={d}]")
    if not 1 <= r <= d:
        raise PldaError(f"rank_r={r} must be in [1, d={d}]")
    sigma = float(options.sigma_floor)
    if sigma == 0 and r < d:
        raise PldaError("sigma_floor=0 requires rank_r = d")

    center_mean = X.mean(axis=0) if options.center else None
    Xp = preprocess(X, options)
    m = Xp.mean(axis=0)
    st = _Stats(Xp - m, spk_idx, n_spk)

    rng = np.random.default_rng(options.seed)
    V = 0.1 * rng.standard_normal((d, q))
    D = 0.1 * rng.standard_normal((d, r))

    history = []
    for it in range(options.max_iterations):
        ll, y_hat, Ryy, Ry = _e_step(st, V, D, sigma)
        history.append(float(ll))
        if it > 0 and abs(history[-1] - history[-2]) < options.log_likelihood_tolerance:
            break
        V, D = _m_step(st, y_hat, Ryy, Ry, r, sigma)
    else:
        history.append(float(_e_step(st, V, D, sigma)[0]))
    logger.info("PLDA EM: %d evaluations, final log-likelihood %.6f", len(history), history[-1])
    return PldaModel(
        m,
        V,
        D,
        sigma_floor=sigma,
        center=options.center,
        length_normalize=options.length_normalize,
        center_mean=center_mean,
        history=tuple(history),
    )


def _check_dim(model, *vs):
    for v in vs:
        if np.shape(v)[-1] != model.dim:
            raise PldaError(f"dimension mismatch: expected {model.dim}, got {np.shape(v)[-1]}")


def _whiten_sq(L, W):
    """Squared norms of the columns of ``L^{-1} W``."""
    Z = linalg.solve_triangular(L, W, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", Z, Z)


def _llr_from_sum_diff(model: PldaModel, S, T) -> np.ndarray:
    # S, T are (d, n) stacks of a + b and a - b; swapping a and b only flips the sign of T
    (l_tot, l_same, l_w), const = model._scoring
    qs = _whiten_sq(l_tot, S) - _whiten_sq(l_same, S)
    qt = _whiten_sq(l_tot, T) - _whiten_sq(l_w, T)
    return const + 0.25 * (qs + qt)


def plda_llr(model: PldaModel, u, v) -> float:
    """Same-speaker vs different-speaker log-likelihood ratio of two conditioned embeddings."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dim(model, u, v)
    a, b = u - model.m, v - model.m
    return float(_llr_from_sum_diff(model, (a + b)[:, None], (a - b)[:, None])[0])


def plda_distance(model: PldaModel, u, v) -> float:
    return -plda_llr(model, u, v)


def llr_matrix(model: PldaModel, X, Y) -> np.ndarray:
    """All-pairs version of :func:`plda_llr`, shape ``(len(X), len(Y))``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    _check_dim(model, X, Y)
    (l_tot, l_same, l_w), const = model._scoring
    A, B = (X - model.m).T, (Y - model.m).T
    # expand |L^-1 (a +- b)|^2 = |L^-1 a|^2 + |L^-1 b|^2 +- 2 <L^-1 a, L^-1 b>
    out = np.full((A.shape[1], B.shape[1]), const)
    for L, sign_s, sign_t in ((l_tot, 1.0, 1.0), (l_same, -1.0, 0.0), (l_w, 0.0, -1.0)):
        ZA = linalg.solve_triangular(L, A, lower=True, check_finite=False)
        ZB = linalg.solve_triangular(L, B, lower=True, check_finite=False)
        na, nb, cr = np.einsum("ij,ij->j", ZA, ZA), np.einsum("ij,ij->j", ZB, ZB), ZA.T @ ZB
        sq = na[:, None] + nb[None, :]
        out += 0.25 * (sign_s * (sq + 2.0 * cr) + sign_t * (sq - 2.0 * cr))
    return out


def log_likelihood(model: PldaModel, embeddings, speaker_labels) -> float:
    """Marginal log-likelihood of conditioned, grouped data under the model."""
    X = np.asarray(embeddings, dtype=np.float64)
    spk_idx, n_spk = _group(list(speaker_labels))
    st = _Stats(X - model.m, spk_idx, n_spk)
    return float(_e_step(st, model.V, model.D, model.sigma_floor)[0])


def format_model(model: PldaModel) -> str:
    lines = [
        f"#plda d={model.dim} q={model.rank_q} r={model.rank_r} "
        f"sigma_floor={format(model.sigma_floor, '.17g')} "
        f"center={int(model.center)} lennorm={int(model.length_normalize)}"
    ]
    if model.center:
        lines.append("#center_mean " + fmt_vector(model.center_mean))
    lines.append(fmt_vector(model.m))
    lines += [fmt_vector(row) for row in model.V]
    lines += [fmt_vector(row) for row in model.D]
    return "\n".join(lines) + "\n"


def save_model(model: PldaModel, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_model(model))


def parse_model(text: str) -> PldaModel:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#plda"):
        raise PldaError("missing '#plda' header")
    try:
        hdr = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
        d, q, r = int(hdr["d"]), int(hdr["q"]), int(hdr["r"])
        sigma = float(hdr["sigma_floor"])
        center, lennorm = hdr["center"] == "1", hdr["lennorm"] == "1"
    except (KeyError, ValueError) as exc:
        raise PldaError(f"bad model header: {exc}") from None
    body = lines[1:]
    center_mean = None
    if body and body[0].startswith("#center_mean"):
        center_mean = np.array([float(x) for x in body[0].split()[1:]])
        body = body[1:]
    body = [ln for ln in body if not ln.startswith("#")]
    if len(body) != 1 + 2 * d:
        raise PldaError(f"expected {1 + 2 * d} data lines, found {len(body)}")
    rows = [np.array([float(x) for x in ln.split()]) for ln in body]
    m = rows[0]
    V, D = np.vstack(rows[1 : 1 + d]), np.vstack(rows[1 + d :])
    if m.size != d or V.shape != (d, q) or D.shape != (d, r):
        raise PldaError("model matrix shapes do not match the header")
    return PldaModel(m, V, D, sigma, center, lennorm, center_mean)


def load_model(path: str | os.PathLike) -> PldaModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model(fh.read())


def llr_rows(model: PldaModel, X, Y) -> np.ndarray:
    """Row-wise :func:`plda_llr` for two equally long stacks of conditioned embeddings."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    _check_dim(model, X, Y)
    if X.shape != Y.shape:
        raise PldaError("row-wise scoring needs equally shaped inputs")
    A, B = X - model.m, Y - model.m
    return _llr_from_sum_diff(model, (A + B).T, (A - B).T)
