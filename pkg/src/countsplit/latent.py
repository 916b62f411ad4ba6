"""Latent-variable estimators and agreement metrics.

Two estimators are provided: the first principal component of a (usually
log-normalised) matrix, giving a continuous trajectory, and k-means, giving
cluster labels. Both return a :class:`LatentEstimate` that pipelines turn into
a GLM regressor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    ConstantInputError,
    DegenerateMatrixError,
    DimensionMismatchError,
    InvalidConfigError,
    TooFewPointsError,
)

TRAJECTORY = "trajectory"
CLUSTERS = "clusters"


@dataclass(frozen=True)
class LatentEstimate:
    """A per-cell latent estimate: trajectory scores or cluster labels."""

    kind: str
    scores: np.ndarray | None = None
    labels: np.ndarray | None = None
    k: int | None = None
    loading: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == TRAJECTORY:
            if self.scores is None:
                raise InvalidConfigError("trajectory estimate needs scores")
            object.__setattr__(self, "scores", np.asarray(self.scores, dtype=np.float64))
        elif self.kind == CLUSTERS:
            if self.labels is None or self.k is None:
                raise InvalidConfigError("cluster estimate needs labels and k")
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.size and (labels.min() < 0 or labels.max() >= self.k):
                raise InvalidConfigError(f"labels must lie in 0..{self.k - 1}")
            object.__setattr__(self, "labels", labels)
        else:
            raise InvalidConfigError(f"unknown latent kind {self.kind!r}")

    @property
    def n_cells(self) -> int:
        return (self.scores if self.kind == TRAJECTORY else self.labels).size

    def regressor(self) -> np.ndarray:
        """GLM covariate: the scores, or cluster indicators for labels 1..k-1.

        With k = 2 this is the raw 0/1 label vector.
        """
        if self.kind == TRAJECTORY:
            return self.scores
        if self.k == 2:
            return self.labels.astype(np.float64)
        return (self.labels[:, None] == np.arange(1, self.k)[None, :]).astype(np.float64)

    def take(self, rows) -> "LatentEstimate":
        rows = np.asarray(rows, dtype=np.int64)
        if self.kind == TRAJECTORY:
            return LatentEstimate(TRAJECTORY, scores=self.scores[rows], loading=self.loading)
        return LatentEstimate(CLUSTERS, labels=self.labels[rows], k=self.k)


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionMismatchError(f"expected a 2D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidConfigError("matrix contains non-finite values")
    return M


def _start_vector(C: np.ndarray) -> np.ndarray:
    # Largest-variance column of C plus a small fixed perturbation, so the
    # start is never exactly orthogonal to the top eigenvector.
    j = int(np.argmax(np.diag(C)))
    v0 = C[:, j].copy()
    jitter = np.random.default_rng(0x5EED).standard_normal(v0.size)
    return v0 + 1e-3 * np.linalg.norm(v0) * jitter / np.linalg.norm(jitter)


# Entries within this relative distance of the largest magnitude count as
# tied; it sits above the vector accuracy the eigenvalue stopping rule gives.
SIGN_TIE_TOL = 1e-4


def _sign_fix(v: np.ndarray) -> np.ndarray:
    mag = np.abs(v)
    idx = int(np.flatnonzero(mag >= mag.max() * (1.0 - SIGN_TIE_TOL))[0])
    return -v if v[idx] < 0 else v


def first_pc(M, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """First principal component of ``M`` (cells in rows).

    Returns
    -------
    scores : ndarray, shape (n,)
        Projections of the column-centred rows on the loading; they sum to 0.
    loading : ndarray, shape (p,)
        Unit-norm top eigenvector of the covariance, signed so that its
        largest-magnitude entry is positive.

    Raises
    ------
    TooFewPointsError
        Fewer than two rows.
    DegenerateMatrixError
        Every column is constant.
    """
    M = _as_matrix(M)
    n, p = M.shape
    if n < 2:
        raise TooFewPointsError("first_pc needs at least 2 rows")
    Mc = M - M.mean(axis=0)
    scale = max(1.0, float(np.abs(M).max()))
    if float(np.abs(Mc).max()) <= 1e-12 * scale:
        raise DegenerateMatrixError("all columns are constant")
    if p <= n:
        C = Mc.T @ Mc / (n - 1)
        _, v, _ = _kernels.power_iteration(C, _start_vector(C), tol)
    else:
        G = Mc @ Mc.T / (n - 1)
        _, u, _ = _kernels.power_iteration(G, _start_vector(G), tol)
        v = Mc.T @ u
    v = _sign_fix(v / np.linalg.norm(v))
    scores = Mc @ v
    return scores - scores.mean(), v


def pc1_estimate(M) -> LatentEstimate:
    scores, loading = first_pc(M)
    return LatentEstimate(TRAJECTORY, scores=scores, loading=loading)


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            nxt = int(rng.integers(n))
        idx.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[idx].copy()


def _canonical_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    mapping = np.empty(labels.max() + 1, dtype=np.int64)
    mapping[np.unique(labels)[order]] = np.arange(order.size)
    return mapping[labels]


def kmeans(M, k: int = 2, seed: int = 0, n_init: int = 10, maxit: int = 300) -> LatentEstimate:
    """k-means with k-means++ seeding; the best of ``n_init`` restarts is kept.

    Labels are renumbered by first appearance, so row 0 is always in cluster 0.

    Raises
    ------
    TooFewPointsError
        Fewer rows than clusters.
    """
    X = _as_matrix(M)
    if k < 2:
        raise InvalidConfigError("k must be at least 2")
    if n_init < 1:
        raise InvalidConfigError("n_init must be at least 1")
    if X.shape[0] < k:
        raise TooFewPointsError(f"{X.shape[0]} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best_obj, best_labels = np.inf, None
    for _ in range(n_init):
        centers = _kmeanspp(X, k, rng)
        labels, _, obj, _ = _kernels.lloyd(X, centers, maxit)
        if obj < best_obj:
            best_obj, best_labels = obj, labels
    return LatentEstimate(CLUSTERS, labels=_canonical_labels(best_labels), k=k)


def kmeans_objective(M, labels) -> float:
    """Within-cluster sum of squared distances to cluster means."""
    X = _as_matrix(M)
    labels = np.asarray(labels)
    return float(sum(((X[labels == c] - X[labels == c].mean(axis=0)) ** 2).sum() for c in np.unique(labels)))


def permute(v, seed) -> np.ndarray:
    """Uniformly random permutation of ``v`` (Fisher-Yates via numpy)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.permutation(np.asarray(v))


def abs_correlation(a, b) -> float:
    """Absolute Pearson correlation of two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size or a.size < 2:
        raise DimensionMismatchError("inputs must have equal length of at least 2")
    ac, bc = a - a.mean(), b - b.mean()
    na, nb = np.sqrt((ac * ac).sum()), np.sqrt((bc * bc).sum())
    if na == 0 or nb == 0:
        raise ConstantInputError("correlation is undefined for a constant input")
    return float(min(1.0, abs((ac @ bc) / (na * nb))))


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise DimensionMismatchError("label vectors must have equal length")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1), dtype=np.int64)
    np.add.at(table, (ia, ib), 1)

    def comb2(x):
        x = np.asarray(x, dtype=np.float64)
        return float((x * (x - 1) / 2.0).sum())

    index = comb2(table)
    sa, sb = comb2(table.sum(axis=1)), comb2(table.sum(axis=0))
    total = a.size * (a.size - 1) / 2.0
    expected = sa * sb / total if total > 0 else 0.0
    max_index = 0.5 * (sa + sb)
    if max_index == expected:
        return 1.0
    return float((index - expected) / (max_index - expected))
