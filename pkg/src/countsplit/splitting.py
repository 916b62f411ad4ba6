"""Data-splitting strategies: count splitting, MCV, cell splitting, gene splitting.

Count splitting draws each train entry as Binomial(X_ij, epsilon) and keeps
the remainder as test. Under a Poisson model the two halves are independent
Poisson matrices with means scaled by epsilon and 1 - epsilon.

Draws come from a counter-based stream keyed on ``(seed, entry index)``,
so a split is a pure function of ``(X, epsilon, seed)`` and is identical on
the numba and numpy backends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .count_matrix import CountMatrix
from .errors import InvalidConfigError, InvalidEpsilonError, InvalidFractionError, TooFewGenesError

TRAIN_STREAM = 0
OVERLAP_STREAM = 1


@dataclass(frozen=True)
class SplitPair:
    train: CountMatrix
    test: CountMatrix
    epsilon: float
    seed: int


@dataclass(frozen=True)
class CellSplit:
    train_rows: np.ndarray
    test_rows: np.ndarray
    fraction: float


@dataclass(frozen=True)
class GeneSplit:
    train_cols: np.ndarray
    test_cols: np.ndarray


@dataclass(frozen=True)
class McvConfig:
    """Settings for the three-step molecular cross-validation split.

    ``capture_prob`` (the per-cell detection probability) is carried for the
    record only; choosing ``p_double_prime`` from it is left to the caller.
    """

    epsilon: float
    capture_prob: np.ndarray
    p_double_prime: np.ndarray

    def validate(self, n_cells: int) -> None:
        _check_epsilon(self.epsilon)
        cap = np.asarray(self.capture_prob, dtype=np.float64)
        pdp = np.asarray(self.p_double_prime, dtype=np.float64)
        if cap.shape != (n_cells,) or pdp.shape != (n_cells,):
            raise InvalidConfigError(
                f"capture_prob and p_double_prime must have length {n_cells}"
            )
        if not np.all((cap > 0) & (cap <= 1)):
            raise InvalidConfigError("capture_prob entries must lie in (0, 1]")
        if not np.all((pdp >= 0) & (pdp < 1)):
            raise InvalidConfigError("p_double_prime entries must lie in [0, 1)")


def _check_epsilon(epsilon: float) -> float:
    eps = float(epsilon)
    if not (0.0 < eps < 1.0):
        raise InvalidEpsilonError(f"epsilon must lie strictly between 0 and 1, got {epsilon}")
    return eps


def thin(counts: np.ndarray, row_probs: np.ndarray, seed: int, stream: int = TRAIN_STREAM) -> np.ndarray:
    """Binomially thin an integer array with per-row success probabilities."""
    return _kernels.binomial_rows(counts, row_probs, _kernels.stream_key(seed, stream))


def count_split(X: CountMatrix, epsilon: float = 0.5, seed: int = 0) -> SplitPair:
    """Split ``X`` into independent-under-Poisson train and test matrices.

    Raises
    ------
    InvalidEpsilonError
        If ``epsilon`` is not strictly inside (0, 1).
    """
    eps = _check_epsilon(epsilon)
    train = thin(X.counts, np.full(X.n_cells, eps), seed)
    return SplitPair(X.with_counts(train), X.with_counts(X.counts - train), eps, int(seed))


def mcv_split(X: CountMatrix, cfg: McvConfig, seed: int = 0) -> SplitPair:
    """Three-step MCV split: train ~ Bin(X, eps), overlap ~ Bin(train, p''_i),
    test = X - train + overlap.

    With ``p_double_prime`` all zero this equals :func:`count_split` under the
    same seed; the overlap draws use a separate stream so the train draws are
    unaffected.
    """
    cfg.validate(X.n_cells)
    eps = float(cfg.epsilon)
    train = thin(X.counts, np.full(X.n_cells, eps), seed)
    both = thin(train, np.asarray(cfg.p_double_prime, dtype=np.float64), seed, OVERLAP_STREAM)
    return SplitPair(X.with_counts(train), X.with_counts(X.counts - train + both), eps, int(seed))


def cell_split(X: CountMatrix, fraction: float = 0.5, seed: int = 0) -> CellSplit:
    """Uniformly random partition of the cells; ``round(fraction * n)`` go to train."""
    n = X.n_cells
    frac = float(fraction)
    if not (0.0 < frac < 1.0):
        raise InvalidFractionError(f"fraction must lie strictly between 0 and 1, got {fraction}")
    n_train = int(math.floor(frac * n + 0.5))
    if n_train < 1 or n_train > n - 1:
        raise InvalidFractionError(
            f"fraction {fraction} with {n} cells gives {n_train} training cells; both sides must be non-empty"
        )
    perm = np.random.default_rng(seed).permutation(n)
    return CellSplit(np.sort(perm[:n_train]), np.sort(perm[n_train:]), frac)


def gene_split(X: CountMatrix, seed: int = 0) -> GeneSplit:
    """Random half/half partition of the genes (train gets the extra one if p is odd)."""
    p = X.n_genes
    if p < 2:
        raise TooFewGenesError(f"gene splitting needs at least 2 genes, got {p}")
    perm = np.random.default_rng(seed).permutation(p)
    half = (p + 1) // 2
    return GeneSplit(np.sort(perm[:half]), np.sort(perm[half:]))
