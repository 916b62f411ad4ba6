"""Per-gene differential-expression procedures built on a latent estimate.

Every procedure estimates a latent variable from some matrix, then regresses
each gene's counts on it with a log-link GLM and reports a p-value for the
slope. They differ in which data feed each step:

* ``count_split``: latent from the thinned train matrix, GLM on test.
* ``double_dip``: both steps on the full matrix.
* ``test_double_dip``: both steps on the test half of a count split.
* ``cell_split``: latent axis from train cells, test cells projected onto it.
* ``gene_split``: latent from one half of the genes, tested on the other.
* ``jackstraw_full`` / ``jackstraw_efficient``: permutation reference for the
  double-dipped |z| statistic.
* ``pseudotime_de``: subsample-and-permute reference for the double-dipped
  |slope|.

Per-gene fit failures never abort a run; they are recorded in
``GeneResult.status`` with a missing p-value.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats
from scipy.cluster import hierarchy

from . import glm, latent
from .count_matrix import CountMatrix, SizeFactors, estimate_size_factors, log_normalize
from .errors import DegenerateClustersError, InvalidConfigError, RankDeficientError, TooFewPointsError
from .splitting import cell_split, count_split, gene_split

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

METHODS = (
    "count_split",
    "double_dip",
    "test_double_dip",
    "cell_split",
    "gene_split",
    "jackstraw_full",
    "jackstraw_efficient",
    "pseudotime_de",
    "cluster_mean_naive",
    "cluster_mean_countsplit",
)
ESTIMATORS = ("pc1_trajectory", "kmeans2")
FAMILIES = ("poisson", "negative_binomial")
GAMMA_POLICIES = ("estimated", "known", "unit")
RESAMPLING_METHODS = ("jackstraw_full", "jackstraw_efficient", "pseudotime_de")

STATUS_OK = "ok"
STATUS_UNCONVERGED = "unconverged"
STATUS_SKIPPED = "skipped"

_DEFAULT_FRACTION = {"cell_split": 0.5, "pseudotime_de": 0.8}


@dataclass(frozen=True)
class MethodConfig:
    """Method selection and its parameters.

    ``fraction`` defaults to 0.5 for cell splitting and 0.8 for the
    PseudotimeDE subsamples. ``plus_one`` switches resampling p-values from
    the plain fraction ``hits / B`` to ``(1 + hits) / (B + 1)``.
    """

    method: str = "count_split"
    estimator: str = "pc1_trajectory"
    family: str = "poisson"
    epsilon: float = 0.5
    fraction: float | None = None
    B: int = 100
    s: int = 10
    seed: int = 0
    plus_one: bool = False
    pseudocount: float = 1.0

    def validate(self, n_genes: int | None = None) -> "MethodConfig":
        if self.method not in METHODS:
            raise InvalidConfigError(f"unknown method {self.method!r}; valid methods: {', '.join(METHODS)}")
        if self.estimator not in ESTIMATORS:
            raise InvalidConfigError(f"unknown estimator {self.estimator!r}; expected one of {ESTIMATORS}")
        if self.family not in FAMILIES:
            raise InvalidConfigError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 < float(self.epsilon) < 1.0:
            raise InvalidConfigError("epsilon must lie strictly between 0 and 1")
        if not 0.0 < self.effective_fraction < 1.0:
            raise InvalidConfigError("fraction must lie strictly between 0 and 1")
        if self.method in RESAMPLING_METHODS and int(self.B) < 1:
            raise InvalidConfigError("B must be at least 1")
        if self.method == "jackstraw_efficient":
            if int(self.s) < 1 or (n_genes is not None and int(self.s) > n_genes):
                raise InvalidConfigError(f"s must lie in [1, p]; got {self.s}")
        if int(self.seed) < 0:
            raise InvalidConfigError("seed must be non-negative")
        if not self.pseudocount > 0:
            raise InvalidConfigError("pseudocount must be positive")
        return self

    @property
    def effective_fraction(self) -> float:
        if self.fraction is not None:
            return float(self.fraction)
        return _DEFAULT_FRACTION.get(self.method, 0.5)


@dataclass(frozen=True)
class GeneResult:
    gene_index: int
    estimate: float | None
    std_error: float | None
    p_value: float | None
    status: str
    latent_key: str = "main"


@dataclass
class DeReport:
    """Results of one procedure on one matrix.

    ``latent`` is the estimate the genes were tested against. For cell
    splitting it covers only ``latent_rows`` (the test cells); for gene
    splitting ``latents`` holds both halves' estimates and each result's
    ``latent_key`` names the one it used.
    """

    method: MethodConfig
    latent: latent.LatentEstimate
    results: list[GeneResult]
    gamma_policy: str = "estimated"
    latents: dict = field(default_factory=dict)
    latent_rows: np.ndarray | None = None
    n_theta_diverged: int = 0
    n_resample_failures: int = 0
    gene_names: tuple | None = None

    def p_values(self) -> np.ndarray:
        return np.array([np.nan if r.p_value is None else r.p_value for r in self.results])

    def estimates(self) -> np.ndarray:
        return np.array([np.nan if r.estimate is None else r.estimate for r in self.results])

    def std_errors(self) -> np.ndarray:
        return np.array([np.nan if r.std_error is None else r.std_error for r in self.results])

    def statuses(self) -> list[str]:
        return [r.status for r in self.results]

    @property
    def n_missing(self) -> int:
        return sum(r.p_value is None for r in self.results)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["gene_index", "gene_name", "latent", "estimate", "std_error", "p_value", "status"])
        for r in self.results:
            name = "" if self.gene_names is None else self.gene_names[r.gene_index]
            w.writerow([r.gene_index, name, r.latent_key, _fmt(r.estimate), _fmt(r.std_error), _fmt(r.p_value), r.status])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        lat = {}
        for key, est in (self.latents or {"main": self.latent}).items():
            lat[key] = {
                "kind": est.kind,
                "values": (est.scores if est.kind == latent.TRAJECTORY else est.labels).tolist(),
            }
        return {
            "schema_version": SCHEMA_VERSION,
            "method": asdict(self.method),
            "gamma_policy": self.gamma_policy,
            "latent": lat,
            "latent_rows": None if self.latent_rows is None else self.latent_rows.tolist(),
            "n_theta_diverged": self.n_theta_diverged,
            "n_resample_failures": self.n_resample_failures,
            "results": [asdict(r) for r in self.results],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def subseed(seed: int, *tags: int) -> int:
    """Deterministic 63-bit sub-seed for a unit of work identified by ``tags``."""
    state = np.random.SeedSequence([int(seed), *[int(t) for t in tags]]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1])) & ((1 << 63) - 1)


# --------------------------------------------------------------------------
# shared steps
# --------------------------------------------------------------------------


def _gamma(counts: np.ndarray, policy: str, known, rows=None) -> np.ndarray:
    """Size factors for ``counts`` (optionally a row subset of the known ones)."""
    if policy == "unit":
        return np.ones(counts.shape[0])
    if policy == "known":
        if known is None:
            raise InvalidConfigError("gamma_policy 'known' needs size factors")
        g = known.gamma if isinstance(known, SizeFactors) else np.asarray(known, dtype=np.float64)
        return g if rows is None else g[rows]
    if policy == "estimated":
        return estimate_size_factors(CountMatrix(counts)).gamma
    raise InvalidConfigError(f"unknown gamma policy {policy!r}; expected one of {GAMMA_POLICIES}")


def _estimate(counts: np.ndarray, gamma: np.ndarray, cfg: MethodConfig, tag: int = 0) -> latent.LatentEstimate:
    M = log_normalize(counts, gamma, cfg.pseudocount)
    if cfg.estimator == "pc1_trajectory":
        return latent.pc1_estimate(M)
    return latent.kmeans(M, 2, seed=subseed(cfg.seed, 7, tag))


@dataclass
class _Fits:
    estimate: np.ndarray
    std_error: np.ndarray
    ok: np.ndarray
    n_theta_diverged: int = 0

    @property
    def z(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.estimate / self.std_error

    @property
    def p(self) -> np.ndarray:
        return glm.wald_p(self.estimate, self.std_error)


def _fit(Y: np.ndarray, z: np.ndarray, offsets: np.ndarray, family: str) -> _Fits:
    m = Y.shape[1]
    try:
        if family == "poisson":
            batch = glm.fit_poisson_batch(Y, z, offsets)
        else:
            batch = glm.fit_negbin_batch(Y, z, offsets)
    except RankDeficientError:
        nan = np.full(m, np.nan)
        return _Fits(nan, nan.copy(), np.zeros(m, dtype=bool))
    est = batch.coefficients[:, 1].copy()
    se = batch.standard_errors[:, 1].copy()
    ok = batch.usable & np.isfinite(est) & np.isfinite(se) & (se > 0)
    est[~ok] = np.nan
    se[~ok] = np.nan
    ndiv = int((batch.status == glm.STATUS_THETA_DIVERGED).sum())
    if ndiv:
        log.info("%d gene(s) fell back to the Poisson fit after theta diverged", ndiv)
    return _Fits(est, se, ok, ndiv)


def _results_from_fits(fits: _Fits, genes=None, latent_key: str = "main") -> list[GeneResult]:
    genes = range(fits.estimate.size) if genes is None else genes
    p = fits.p
    out = []
    for k, j in enumerate(genes):
        if fits.ok[k]:
            out.append(GeneResult(int(j), float(fits.estimate[k]), float(fits.std_error[k]), float(p[k]), STATUS_OK, latent_key))
        else:
            out.append(GeneResult(int(j), None, None, None, STATUS_UNCONVERGED, latent_key))
    return out


def _check(X: CountMatrix, cfg: MethodConfig | None, method: str) -> MethodConfig:
    cfg = MethodConfig(method=method) if cfg is None else cfg
    if cfg.method != method:
        cfg = replace(cfg, method=method)
    return cfg.validate(X.n_genes)


def _report(cfg, est, results, policy, X, **kw) -> DeReport:
    return DeReport(cfg, est, results, gamma_policy=policy, gene_names=X.gene_names, **kw)


# --------------------------------------------------------------------------
# single-fit procedures
# --------------------------------------------------------------------------


def de_count_split(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
                   gamma: SizeFactors | None = None) -> DeReport:
    """Latent from log-normalised ``X^train``, Wald tests of ``X^test_j`` on it.

    With ``gamma_policy="estimated"`` the size factors estimated from
    ``X^train`` serve both for normalisation and as GLM offsets.
    """
    cfg = _check(X, cfg, "count_split")
    pair = count_split(X, cfg.epsilon, cfg.seed)
    g = _gamma(pair.train.counts, gamma_policy, gamma)
    est = _estimate(pair.train.counts, g, cfg)
    fits = _fit(pair.test.counts, est.regressor(), g, cfg.family)
    return _report(cfg, est, _results_from_fits(fits), gamma_policy, X, n_theta_diverged=fits.n_theta_diverged)


def de_double_dip(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
                  gamma: SizeFactors | None = None) -> DeReport:
    """Latent and GLM both from the full matrix."""
    cfg = _check(X, cfg, "double_dip")
    g = _gamma(X.counts, gamma_policy, gamma)
    est = _estimate(X.counts, g, cfg)
    fits = _fit(X.counts, est.regressor(), g, cfg.family)
    return _report(cfg, est, _results_from_fits(fits), gamma_policy, X, n_theta_diverged=fits.n_theta_diverged)


def de_test_double_dip(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
                       gamma: SizeFactors | None = None) -> DeReport:
    """Double dipping on ``X^test`` alone, using as much data as count splitting does."""
    cfg = _check(X, cfg, "test_double_dip")
    pair = count_split(X, cfg.epsilon, cfg.seed)
    g = _gamma(pair.test.counts, gamma_policy, gamma)
    est = _estimate(pair.test.counts, g, cfg)
    fits = _fit(pair.test.counts, est.regressor(), g, cfg.family)
    return _report(cfg, est, _results_from_fits(fits), gamma_policy, X, n_theta_diverged=fits.n_theta_diverged)


def de_cell_split(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
                  gamma: SizeFactors | None = None) -> DeReport:
    """Latent axis from the train cells; test cells projected onto it and tested.

    Test rows are centred by the train column means before projection. With
    the k-means estimator, test cells take the label of the nearest train
    centroid.
    """
    cfg = _check(X, cfg, "cell_split")
    part = cell_split(X, cfg.effective_fraction, cfg.seed)
    tr, te = part.train_rows, part.test_rows
    g_tr = _gamma(X.counts[tr], gamma_policy, gamma, tr)
    g_te = _gamma(X.counts[te], gamma_policy, gamma, te)
    M_tr = log_normalize(X.counts[tr], g_tr, cfg.pseudocount)
    M_te = log_normalize(X.counts[te], g_te, cfg.pseudocount)
    if cfg.estimator == "pc1_trajectory":
        _, loading = latent.first_pc(M_tr)
        scores = (M_te - M_tr.mean(axis=0)) @ loading
        est = latent.LatentEstimate(latent.TRAJECTORY, scores=scores, loading=loading)
    else:
        km = latent.kmeans(M_tr, 2, seed=subseed(cfg.seed, 7, 0))
        centers = np.stack([M_tr[km.labels == c].mean(axis=0) for c in range(2)])
        d2 = ((M_te[:, None, :] - centers[None]) ** 2).sum(axis=2)
        est = latent.LatentEstimate(latent.CLUSTERS, labels=d2.argmin(axis=1), k=2)
    fits = _fit(X.counts[te], est.regressor(), g_te, cfg.family)
    return _report(cfg, est, _results_from_fits(fits), gamma_policy, X, latent_rows=te,
                   n_theta_diverged=fits.n_theta_diverged)


def de_gene_split(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
                  gamma: SizeFactors | None = None) -> DeReport:
    """Each half of the genes is tested against the latent estimated from the other half.

    Results carry ``latent_key`` ``"train_half"`` (genes tested against the
    latent from the train-half genes) or ``"test_half"``.
    """
    cfg = _check(X, cfg, "gene_split")
    part = gene_split(X, cfg.seed)
    results: list[GeneResult] = []
    latents = {}
    ndiv = 0
    for key, src, dst, tag in (("train_half", part.train_cols, part.test_cols, 0),
                               ("test_half", part.test_cols, part.train_cols, 1)):
        sub = X.counts[:, src]
        g = _gamma(sub, gamma_policy, gamma)
        est = _estimate(sub, g, cfg, tag)
        latents[key] = est
        fits = _fit(X.counts[:, dst], est.regressor(), g, cfg.family)
        ndiv += fits.n_theta_diverged
        results.extend(_results_from_fits(fits, dst, key))
    results.sort(key=lambda r: r.gene_index)
    return _report(cfg, latents["train_half"], results, gamma_policy, X, latents=latents, n_theta_diverged=ndiv)


# --------------------------------------------------------------------------
# resampling procedures
# --------------------------------------------------------------------------


def _empirical_p(hits: np.ndarray, total: np.ndarray, plus_one: bool) -> np.ndarray:
    hits = np.asarray(hits, dtype=np.float64)
    total = np.asarray(total, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        if plus_one:
            return (1.0 + hits) / (total + 1.0)
        return np.where(total > 0, hits / total, np.nan)


def _resampling_report(cfg, est, obs: _Fits, stat_obs, p, policy, X, failures) -> DeReport:
    results = []
    for j in range(X.n_genes):
        if obs.ok[j] and np.isfinite(p[j]):
            results.append(GeneResult(j, float(obs.estimate[j]), float(obs.std_error[j]), float(p[j]), STATUS_OK))
        else:
            results.append(GeneResult(j, None, None, None, STATUS_UNCONVERGED))
    if failures:
        log.info("%d permuted fit(s) dropped from the reference distribution", failures)
    return _report(cfg, est, results, policy, X, n_theta_diverged=obs.n_theta_diverged, n_resample_failures=failures)


def jackstraw(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
              variant: str = "efficient", gamma: SizeFactors | None = None) -> DeReport:
    """Permutation p-values for the double-dipped ``|z|`` statistic.

    ``variant="full"`` permutes one gene at a time, ``B`` times per gene, and
    compares each gene with its own reference. ``variant="efficient"``
    permutes a fresh random set of ``s`` genes in each of ``B`` rounds and
    pools all ``B * s`` permuted statistics into one reference for every gene.
    """
    if variant not in ("full", "efficient"):
        raise InvalidConfigError("variant must be 'full' or 'efficient'")
    cfg = _check(X, cfg, f"jackstraw_{variant}")
    counts = X.counts
    n, p = counts.shape
    g = _gamma(counts, gamma_policy, gamma)
    est = _estimate(counts, g, cfg)
    obs = _fit(counts, est.regressor(), g, cfg.family)
    stat_obs = np.abs(obs.z)
    rng = np.random.default_rng(subseed(cfg.seed, 11))
    B = int(cfg.B)
    failures = 0
    if variant == "efficient":
        pool = []
        for b in range(B):
            cols = np.sort(rng.choice(p, size=int(cfg.s), replace=False))
            perm = counts.copy()
            for j in cols:
                perm[:, j] = rng.permutation(perm[:, j])
            gb = _gamma(perm, gamma_policy, gamma)
            est_b = _estimate(perm, gb, cfg, b + 1)
            fb = _fit(perm[:, cols], est_b.regressor(), gb, cfg.family)
            failures += int((~fb.ok).sum())
            pool.append(np.abs(fb.z[fb.ok]))
        pool = np.sort(np.concatenate(pool)) if pool else np.empty(0)
        hits = pool.size - np.searchsorted(pool, stat_obs, side="left")
        p_val = _empirical_p(hits, np.full(p, pool.size), cfg.plus_one)
    else:
        hits = np.zeros(p)
        total = np.zeros(p)
        for j in range(p):
            for b in range(B):
                perm = counts.copy()
                perm[:, j] = rng.permutation(perm[:, j])
                gb = _gamma(perm, gamma_policy, gamma)
                est_b = _estimate(perm, gb, cfg, j * B + b + 1)
                fb = _fit(perm[:, j:j + 1], est_b.regressor(), gb, cfg.family)
                if fb.ok[0]:
                    total[j] += 1
                    hits[j] += abs(fb.z[0]) >= stat_obs[j]
                else:
                    failures += 1
        p_val = _empirical_p(hits, total, cfg.plus_one)
    return _resampling_report(cfg, est, obs, stat_obs, p_val, gamma_policy, X, failures)


def pseudotime_de(X: CountMatrix, gamma_policy: str = "estimated", cfg: MethodConfig | None = None,
                  gamma: SizeFactors | None = None) -> DeReport:
    """Subsample-and-permute p-values for the double-dipped ``|slope|``.

    Each of ``B`` rounds draws ``round(fraction * n)`` cells without
    replacement, re-estimates the latent on them, permutes it, and refits
    every gene.
    """
    cfg = _check(X, cfg, "pseudotime_de")
    counts = X.counts
    n, p = counts.shape
    m = int(math.floor(cfg.effective_fraction * n + 0.5))
    if m < 3:
        raise TooFewPointsError(f"subsample of {m} cells is too small to fit a regression")
    g = _gamma(counts, gamma_policy, gamma)
    est = _estimate(counts, g, cfg)
    obs = _fit(counts, est.regressor(), g, cfg.family)
    stat_obs = np.abs(obs.estimate)
    rng = np.random.default_rng(subseed(cfg.seed, 13))
    hits = np.zeros(p)
    total = np.zeros(p)
    failures = 0
    for b in range(int(cfg.B)):
        rows = np.sort(rng.choice(n, size=m, replace=False))
        sub = counts[rows]
        gb = _gamma(sub, gamma_policy, gamma, rows)
        est_b = _estimate(sub, gb, cfg, b + 1)
        z_perm = latent.permute(est_b.regressor(), rng)
        fb = _fit(sub, z_perm, gb, cfg.family)
        total += fb.ok
        hits += fb.ok & (np.abs(np.nan_to_num(fb.estimate)) >= stat_obs)
        failures += int((~fb.ok).sum())
    p_val = _empirical_p(hits, total, cfg.plus_one)
    return _resampling_report(cfg, est, obs, stat_obs, p_val, gamma_policy, X, failures)


# --------------------------------------------------------------------------
# cluster-mean test
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterTestResult:
    """Test of equal mean vectors between two estimated clusters.

    ``statistic`` is ``||mean_1 - mean_2|| / (sigma * sqrt(1/n1 + 1/n2))``,
    referred to a chi distribution with ``df`` (number of genes) degrees of
    freedom.
    """

    statistic: float
    p_value: float
    mean_difference_norm: float
    sigma: float
    sizes: tuple[int, int]
    df: int
    labels: np.ndarray


def _average_linkage_two(M: np.ndarray) -> np.ndarray:
    Z = hierarchy.linkage(M, method="average", metric="euclidean")
    return hierarchy.fcluster(Z, t=2, criterion="maxclust") - 1


def _naive_mean_test(M: np.ndarray, labels: np.ndarray, allow_singletons: bool) -> ClusterTestResult:
    n, q = M.shape
    sizes = np.bincount(labels, minlength=2)
    if sizes.size != 2 or sizes.min() < 1:
        raise DegenerateClustersError("clustering did not produce two non-empty clusters")
    if sizes.min() < 2 and not allow_singletons:
        raise DegenerateClustersError(f"singleton cluster (sizes {sizes[0]}, {sizes[1]})")
    # Conservative sigma: pooled over all column-centred entries, ignoring clusters.
    centred = M - M.mean(axis=0)
    sigma = math.sqrt(float((centred ** 2).sum()) / (n * q - q))
    if sigma == 0.0:
        raise DegenerateClustersError("transformed matrix has zero variance")
    diff = np.linalg.norm(M[labels == 0].mean(axis=0) - M[labels == 1].mean(axis=0))
    stat = diff / (sigma * math.sqrt(1.0 / sizes[0] + 1.0 / sizes[1]))
    pval = float(stats.chi2.sf(stat ** 2, df=q))
    return ClusterTestResult(float(stat), pval, float(diff), sigma, (int(sizes[0]), int(sizes[1])), q, labels)


def cluster_mean_test(X: CountMatrix, cfg: MethodConfig | None = None, variant: str = "count_split",
                      allow_singletons: bool = False) -> ClusterTestResult:
    """Two-cluster mean test on ``log(X + 1)`` after average-linkage clustering.

    ``variant="naive"`` clusters and tests the same matrix. ``variant="count_split"``
    clusters ``log(X^train + 1)`` and tests ``log(X^test + 1)``.

    Raises
    ------
    DegenerateClustersError
        A cluster is a singleton (unless ``allow_singletons``) or the tested
        matrix has zero variance.
    """
    if variant not in ("naive", "count_split"):
        raise InvalidConfigError("variant must be 'naive' or 'count_split'")
    if X.n_cells < 4:
        raise TooFewPointsError("cluster_mean_test needs at least 4 cells")
    method = "cluster_mean_naive" if variant == "naive" else "cluster_mean_countsplit"
    cfg = _check(X, cfg, method)
    if variant == "naive":
        M = np.log1p(X.counts.astype(np.float64))
        return _naive_mean_test(M, _average_linkage_two(M), allow_singletons)
    pair = count_split(X, cfg.epsilon, cfg.seed)
    labels = _average_linkage_two(np.log1p(pair.train.counts.astype(np.float64)))
    return _naive_mean_test(np.log1p(pair.test.counts.astype(np.float64)), labels, allow_singletons)


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------


_DISPATCH = {
    "count_split": de_count_split,
    "double_dip": de_double_dip,
    "test_double_dip": de_test_double_dip,
    "cell_split": de_cell_split,
    "gene_split": de_gene_split,
    "pseudotime_de": pseudotime_de,
}


def run_method(X: CountMatrix, cfg: MethodConfig, gamma_policy: str = "estimated",
               gamma: SizeFactors | None = None) -> DeReport:
    """Run any per-gene procedure named by ``cfg.method``."""
    cfg.validate(X.n_genes)
    if cfg.method in _DISPATCH:
        return _DISPATCH[cfg.method](X, gamma_policy, cfg, gamma=gamma)
    if cfg.method.startswith("jackstraw_"):
        return jackstraw(X, gamma_policy, cfg, variant=cfg.method.split("_", 1)[1], gamma=gamma)
    raise InvalidConfigError(f"{cfg.method} is not a per-gene procedure; use cluster_mean_test")


def compare(X: CountMatrix, cfg: MethodConfig | None = None, gamma_policy: str = "estimated",
            gamma: SizeFactors | None = None) -> dict[str, DeReport]:
    """Full double dipping, count splitting and test double dipping on one matrix.

    All three share ``cfg``'s seed, so count splitting and test double dipping
    use the same split.
    """
    cfg = MethodConfig() if cfg is None else cfg
    return {
        m: run_method(X, replace(cfg, method=m), gamma_policy, gamma)
        for m in ("double_dip", "count_split", "test_double_dip")
    }
