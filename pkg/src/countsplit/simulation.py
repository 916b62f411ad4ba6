"""Scenario generators, Monte-Carlo runners and summary metrics.

Replicate ``r`` of any runner draws its data from ``subseed(scenario.seed, r)``
and its method randomness from ``subseed(method.seed, r)``, so results do not
depend on how replicates are distributed across worker processes.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from scipy import stats

from . import glm, latent, pipelines
from .count_matrix import CountMatrix, SizeFactors
from .errors import CountSplitError, InvalidConfigError, NumericalError
from .pipelines import MethodConfig, subseed
from .splitting import count_split

LATENT_KINDS = ("none", "trajectory", "clusters")
SIZE_FACTOR_MODELS = ("unit", "gamma_10_10")
LEVELS = (0.01, 0.05, 0.1)


@dataclass(frozen=True)
class ScenarioConfig:
    """Data-generating settings.

    Counts are Poisson with mean ``gamma_i * exp(beta0_j + beta1_j * L_i)``,
    or Gamma-Poisson with variance ``mean + mean^2 / b`` when
    ``overdispersion_b`` is set. ``latent_seed`` fixes L across replicates;
    by default L is redrawn with every seed.
    """

    n: int
    p: int
    latent_kind: str = "none"
    beta0: np.ndarray = field(default=None)
    beta1: np.ndarray = field(default=None)
    overdispersion_b: float | None = None
    size_factor_model: str = "unit"
    seed: int = 0
    latent_seed: int | None = None

    def __post_init__(self):
        if int(self.n) < 1 or int(self.p) < 1:
            raise InvalidConfigError("n and p must be positive")
        b0 = np.zeros(self.p) if self.beta0 is None else np.broadcast_to(np.asarray(self.beta0, dtype=np.float64), (self.p,))
        b1 = np.zeros(self.p) if self.beta1 is None else np.broadcast_to(np.asarray(self.beta1, dtype=np.float64), (self.p,))
        object.__setattr__(self, "beta0", np.array(b0))
        object.__setattr__(self, "beta1", np.array(b1))
        self.validate()

    def validate(self) -> None:
        if self.latent_kind not in LATENT_KINDS:
            raise InvalidConfigError(f"latent_kind must be one of {LATENT_KINDS}")
        if self.size_factor_model not in SIZE_FACTOR_MODELS:
            raise InvalidConfigError(f"size_factor_model must be one of {SIZE_FACTOR_MODELS}")
        if self.overdispersion_b is not None and not self.overdispersion_b > 0:
            raise InvalidConfigError("overdispersion_b must be positive")
        if not (np.all(np.isfinite(self.beta0)) and np.all(np.isfinite(self.beta1))):
            raise InvalidConfigError("coefficients must be finite")
        if self.latent_kind == "none" and np.any(self.beta1 != 0):
            raise InvalidConfigError("beta1 must be zero when there is no latent variable")
        if int(self.seed) < 0:
            raise InvalidConfigError("seed must be non-negative")

    def to_dict(self) -> dict:
        return {
            "n": int(self.n), "p": int(self.p), "latent_kind": self.latent_kind,
            "beta0": self.beta0.tolist(), "beta1": self.beta1.tolist(),
            "overdispersion_b": self.overdispersion_b, "size_factor_model": self.size_factor_model,
            "seed": int(self.seed), "latent_seed": self.latent_seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {"n", "p", "latent_kind", "beta0", "beta1", "overdispersion_b", "size_factor_model", "seed", "latent_seed"}
        extra = set(d) - known
        if extra:
            raise InvalidConfigError(f"unknown scenario keys: {sorted(extra)}")
        return cls(**d)


def _draw_latent(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.latent_kind == "trajectory":
        z = rng.standard_normal(cfg.n)
        return z - z.mean()
    if cfg.latent_kind == "clusters":
        return rng.binomial(1, 0.5, cfg.n).astype(np.float64)
    return np.zeros(cfg.n)


def generate(cfg: ScenarioConfig):
    """Draw one dataset.

    Returns
    -------
    X : CountMatrix
    gamma : SizeFactors
    true_latent : LatentEstimate or None
        None when ``latent_kind`` is ``"none"``.
    """
    cfg.validate()
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), 0xDA7A]))
    if cfg.size_factor_model == "gamma_10_10":
        gamma = rng.gamma(10.0, 1.0 / 10.0, cfg.n)
    else:
        gamma = np.ones(cfg.n)
    lat_rng = rng if cfg.latent_seed is None else np.random.default_rng(np.random.SeedSequence([int(cfg.latent_seed), 0x1A7]))
    L = _draw_latent(cfg, lat_rng)
    mean = gamma[:, None] * np.exp(cfg.beta0[None, :] + L[:, None] * cfg.beta1[None, :])
    if cfg.overdispersion_b is not None:
        b = float(cfg.overdispersion_b)
        mean = mean * rng.gamma(b, 1.0 / b, mean.shape)
    X = CountMatrix(rng.poisson(mean))
    if cfg.latent_kind == "trajectory":
        truth = latent.LatentEstimate(latent.TRAJECTORY, scores=L)
    elif cfg.latent_kind == "clusters":
        truth = latent.LatentEstimate(latent.CLUSTERS, labels=L.astype(np.int64), k=2)
    else:
        truth = None
    return X, SizeFactors(gamma), truth


def expected_counts(cfg: ScenarioConfig, gamma: SizeFactors, truth) -> np.ndarray:
    """``E[X]`` given the drawn size factors and latent variable."""
    L = np.zeros(cfg.n) if truth is None else truth.regressor()
    return gamma.gamma[:, None] * np.exp(cfg.beta0[None, :] + L[:, None] * cfg.beta1[None, :])


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationSummary:
    """Uniformity diagnostics for a pool of p-values (missing values excluded)."""

    ks_distance: float
    rejection_rate_at: dict
    qq_points: np.ndarray
    n_pvalues: int
    n_missing: int

    def to_rows(self, **keys) -> list[dict]:
        rows = [dict(keys, metric="ks_distance", value=self.ks_distance),
                dict(keys, metric="n_pvalues", value=self.n_pvalues),
                dict(keys, metric="n_missing", value=self.n_missing)]
        for level, rate in self.rejection_rate_at.items():
            rows.append(dict(keys, metric=f"rejection_rate_{level:g}", value=rate))
        return rows


def summarize_pvalues(p, levels=LEVELS, max_qq_points: int = 500) -> CalibrationSummary:
    """KS distance to Unif(0, 1), rejection rates and QQ points for ``p``."""
    p = np.asarray(p, dtype=np.float64).ravel()
    missing = int(np.isnan(p).sum())
    p = np.sort(p[~np.isnan(p)])
    m = p.size
    if m == 0:
        return CalibrationSummary(float("nan"), {lv: float("nan") for lv in levels}, np.empty((0, 2)), 0, missing)
    ks = float(stats.kstest(p, "uniform").statistic)
    rates = {float(lv): float(np.mean(p <= lv)) for lv in levels}
    idx = np.unique(np.linspace(0, m - 1, min(m, max_qq_points)).round().astype(np.int64))
    qq = np.column_stack([(idx + 0.5) / m, p[idx]])
    return CalibrationSummary(ks, rates, qq, m, missing)


@dataclass
class CalibrationResult:
    """Pooled summary plus one summary per gene group, and the raw p-values.

    ``pvalues`` has shape (replicates, p) with NaN for missing values.
    """

    overall: CalibrationSummary
    groups: dict
    pvalues: np.ndarray
    n_failed_replicates: int = 0

    def to_rows(self, **keys) -> list[dict]:
        rows = self.overall.to_rows(**keys, group="all")
        for name, s in self.groups.items():
            rows.extend(s.to_rows(**keys, group=name))
        return rows


def _calibration_replicate(r: int, scenario: ScenarioConfig, method: MethodConfig, gamma_policy: str) -> np.ndarray:
    X, gamma, _ = generate(replace(scenario, seed=subseed(scenario.seed, r)))
    cfg = replace(method, seed=subseed(method.seed, r))
    try:
        report = pipelines.run_method(X, cfg, gamma_policy, gamma)
    except NumericalError:
        return np.full(scenario.p, np.nan)
    return report.p_values()


def parallel_map(fn, items, threads: int = 1) -> list:
    """Order-preserving map, optionally over a process pool."""
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("COUNTSPLIT_THREADS", "1") or 1)
    if threads < 1:
        raise InvalidConfigError("threads must be at least 1")
    return threads


def run_calibration(scenario: ScenarioConfig, method: MethodConfig, replicates: int,
                    groups: dict | None = None, gamma_policy: str = "known", threads: int = 1) -> CalibrationResult:
    """Run ``method`` on ``replicates`` datasets and summarise p-value uniformity.

    ``groups`` maps a name to gene indices; each group is summarised
    separately in addition to the pooled summary.
    """
    if int(replicates) < 1:
        raise InvalidConfigError("replicates must be at least 1")
    method.validate(scenario.p)
    fn = partial(_calibration_replicate, scenario=scenario, method=method, gamma_policy=gamma_policy)
    P = np.vstack(parallel_map(fn, range(int(replicates)), threads))
    failed = int(np.all(np.isnan(P), axis=1).sum())
    groups = groups or {}
    return CalibrationResult(
        summarize_pvalues(P),
        {name: summarize_pvalues(P[:, np.asarray(idx)]) for name, idx in groups.items()},
        P,
        failed,
    )


def run_overdispersion_sweep(b_values, base: ScenarioConfig, method: MethodConfig, replicates: int,
                             gamma_policy: str = "known", threads: int = 1) -> dict:
    """One calibration per overdispersion value ``b`` (Gamma-Poisson data)."""
    out = {}
    for k, b in enumerate(b_values):
        scen = replace(base, overdispersion_b=float(b), seed=subseed(base.seed, 1000 + k))
        out[float(b)] = run_calibration(scen, method, replicates, gamma_policy=gamma_policy, threads=threads)
    return out


# --------------------------------------------------------------------------
# power and coverage
# --------------------------------------------------------------------------


@dataclass
class PowerCoverageSummary:
    """Per (epsilon, replicate, gene) records from :func:`run_power_coverage`.

    ``rejected`` and ``covers`` are only meaningful where ``converged`` holds.
    ``quality`` is the latent-recovery score of the replicate (absolute
    correlation for trajectories, adjusted Rand index for clusters).
    """

    epsilon: np.ndarray
    replicate: np.ndarray
    gene: np.ndarray
    beta0: np.ndarray
    beta1: np.ndarray
    target: np.ndarray
    estimate: np.ndarray
    std_error: np.ndarray
    p_value: np.ndarray
    converged: np.ndarray
    rejected: np.ndarray
    covers: np.ndarray
    quality: np.ndarray
    level: float = 0.95
    alpha: float = 0.05

    @property
    def is_null(self) -> np.ndarray:
        return self.beta1 == 0

    def _mask(self, epsilon=None, null=None, beta0=None) -> np.ndarray:
        m = self.converged.copy()
        if epsilon is not None:
            m &= np.isclose(self.epsilon, epsilon)
        if null is not None:
            m &= self.is_null == null
        if beta0 is not None:
            m &= np.isclose(self.beta0, beta0)
        return m

    def coverage(self, **sel) -> float:
        m = self._mask(**sel)
        return float(self.covers[m].mean()) if m.any() else float("nan")

    def rejection_rate(self, **sel) -> float:
        m = self._mask(**sel)
        return float(self.rejected[m].mean()) if m.any() else float("nan")

    def null_calibration(self, epsilon) -> CalibrationSummary:
        m = np.isclose(self.epsilon, epsilon) & self.is_null
        return summarize_pvalues(np.where(self.converged[m], self.p_value[m], np.nan))

    def power_curve(self, edges, epsilon, beta0=None):
        """Rejection rate of non-null genes binned by the absolute target parameter.

        The sign of the target follows the arbitrary orientation of the latent
        estimate, so bins use ``|target|``. Returns ``(rates, counts)`` per bin
        ``[edges[k], edges[k+1])``.
        """
        m = self._mask(epsilon=epsilon, null=False, beta0=beta0)
        t = np.abs(self.target[m])
        rej = self.rejected[m]
        k = np.digitize(t, edges) - 1
        nb = len(edges) - 1
        counts = np.array([(k == i).sum() for i in range(nb)])
        rates = np.array([rej[k == i].mean() if counts[i] else np.nan for i in range(nb)])
        return rates, counts

    def mean_quality(self, epsilon) -> float:
        m = np.isclose(self.epsilon, epsilon)
        return float(np.nanmean(self.quality[m]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ("epsilon", "replicate", "gene", "beta0", "beta1", "target", "estimate", "std_error",
                "p_value", "converged", "rejected", "covers", "quality")
        w.writerow(cols)
        arrays = [getattr(self, c) for c in cols]
        for row in zip(*arrays):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else int(v) for v in row])
        return buf.getvalue()


def _estimator_for(kind: str) -> str:
    if kind == "trajectory":
        return "pc1_trajectory"
    if kind == "clusters":
        return "kmeans2"
    raise InvalidConfigError("power/coverage runs need a trajectory or cluster latent variable")


def _power_replicate(r: int, scenario: ScenarioConfig, epsilons, beta1_values, nonnull, estimator,
                     method_seed: int, level: float, alpha: float):
    scen = replace(scenario, seed=subseed(scenario.seed, r))
    if beta1_values is not None:
        scen = replace(scen, beta1=np.where(nonnull, beta1_values[r % len(beta1_values)], 0.0))
    X, gamma, truth = generate(scen)
    mean = expected_counts(scen, gamma, truth)
    zq = stats.norm.ppf(0.5 + level / 2.0)
    rows = []
    for k, eps in enumerate(epsilons):
        cfg = MethodConfig(method="count_split", estimator=estimator, epsilon=float(eps),
                           seed=subseed(method_seed, r, k))
        p = scen.p
        try:
            report = pipelines.de_count_split(X, "known", cfg, gamma)
            est, se, pv = report.estimates(), report.std_errors(), report.p_values()
            lat = report.latent
            try:
                target = glm.target_parameter((1.0 - eps) * mean, lat.regressor(), gamma)[:, 1]
            except CountSplitError:
                target = np.full(p, np.nan)
            if truth.kind == latent.TRAJECTORY:
                quality = latent.abs_correlation(truth.scores, lat.scores)
            else:
                quality = latent.adjusted_rand_index(truth.labels, lat.labels)
        except NumericalError:
            est = se = pv = target = np.full(p, np.nan)
            quality = np.nan
        conv = np.isfinite(pv) & np.isfinite(target)
        half = zq * se
        covers = conv & (est - half <= target) & (target <= est + half)
        rows.append(dict(
            epsilon=np.full(p, float(eps)), replicate=np.full(p, r), gene=np.arange(p),
            beta0=scen.beta0, beta1=scen.beta1, target=target, estimate=est, std_error=se,
            p_value=pv, converged=conv, rejected=conv & (pv <= alpha), covers=covers,
            quality=np.full(p, quality),
        ))
    return rows


def run_power_coverage(scenario: ScenarioConfig, epsilons, replicates: int, beta1_values=None,
                       nonnull=None, method_seed: int = 0, level: float = 0.95, alpha: float = 0.05,
                       threads: int = 1) -> PowerCoverageSummary:
    """Count-split power, Wald CI coverage and latent quality across ``epsilons``.

    Each replicate draws one dataset and analyses it at every epsilon. When
    ``beta1_values`` is given, replicate ``r`` sets the slope of the genes in
    ``nonnull`` (default: the scenario's non-zero slopes) to
    ``beta1_values[r % len(beta1_values)]``.
    """
    if int(replicates) < 1:
        raise InvalidConfigError("replicates must be at least 1")
    eps = [float(e) for e in epsilons]
    for e in eps:
        if not 0.0 < e < 1.0:
            raise InvalidConfigError("epsilon values must lie strictly between 0 and 1")
    if nonnull is None:
        nonnull = scenario.beta1 != 0
    nonnull = np.asarray(nonnull, dtype=bool)
    fn = partial(_power_replicate, scenario=scenario, epsilons=eps,
                 beta1_values=None if beta1_values is None else [float(b) for b in beta1_values],
                 nonnull=nonnull, estimator=_estimator_for(scenario.latent_kind),
                 method_seed=method_seed, level=level, alpha=alpha)
    chunks = parallel_map(fn, range(int(replicates)), threads)
    rows = [row for chunk in chunks for row in chunk]
    cat = {key: np.concatenate([row[key] for row in rows]) for key in rows[0]}
    return PowerCoverageSummary(**cat, level=level, alpha=alpha)


# --------------------------------------------------------------------------
# cluster-mean test calibration
# --------------------------------------------------------------------------


@dataclass
class ClusterCalibration:
    summaries: dict
    n_degenerate: dict


def _cluster_replicate(r, scenario, method, variants, allow_singletons):
    X, _, _ = generate(replace(scenario, seed=subseed(scenario.seed, r)))
    cfg = replace(method, seed=subseed(method.seed, r))
    out = []
    for v in variants:
        try:
            out.append(pipelines.cluster_mean_test(X, cfg, v, allow_singletons=allow_singletons).p_value)
        except NumericalError:
            out.append(np.nan)
    return out


def run_cluster_calibration(scenario: ScenarioConfig, replicates: int, method: MethodConfig | None = None,
                            variants=("naive", "count_split"), allow_singletons: bool = True,
                            threads: int = 1) -> ClusterCalibration:
    """Null calibration of the two-cluster mean test.

    Singleton clusters are tested by default: the pooled variance estimate
    does not need within-cluster replication, and dropping them would
    condition on the clustering outcome.
    """
    if int(replicates) < 1:
        raise InvalidConfigError("replicates must be at least 1")
    method = MethodConfig(method="cluster_mean_countsplit") if method is None else method
    fn = partial(_cluster_replicate, scenario=scenario, method=method, variants=tuple(variants),
                 allow_singletons=allow_singletons)
    P = np.array(parallel_map(fn, range(int(replicates)), threads), dtype=np.float64)
    return ClusterCalibration(
        {v: summarize_pvalues(P[:, k]) for k, v in enumerate(variants)},
        {v: int(np.isnan(P[:, k]).sum()) for k, v in enumerate(variants)},
    )


# --------------------------------------------------------------------------
# thinning diagnostics
# --------------------------------------------------------------------------


def thinning_correlations(lam: float, epsilon: float, n_draws: int, b: float | None = None,
                          seed: int = 0) -> dict:
    """Empirical correlations of one count-split coordinate.

    Draws ``n_draws`` Poisson (or Gamma-Poisson with shape ``b``) counts with
    mean ``lam``, splits them, and reports ``Cor(X, train)`` and
    ``Cor(train, test)``.
    """
    cfg = ScenarioConfig(n=int(n_draws), p=1, beta0=math.log(lam), overdispersion_b=b, seed=seed)
    X, _, _ = generate(cfg)
    pair = count_split(X, epsilon, seed)
    x = X.counts[:, 0].astype(np.float64)
    tr = pair.train.counts[:, 0].astype(np.float64)
    te = pair.test.counts[:, 0].astype(np.float64)
    return {
        "cor_x_train": float(np.corrcoef(x, tr)[0, 1]),
        "cor_train_test": float(np.corrcoef(tr, te)[0, 1]),
        "mean_train": float(tr.mean()),
        "var_train": float(tr.var(ddof=1)),
    }


def negbin_train_test_correlation(lam: float, b: float, epsilon: float) -> float:
    """Closed-form train/test correlation for Gamma-Poisson counts."""
    e = epsilon * (1.0 - epsilon)
    return math.sqrt(e) / math.sqrt(e + (b / lam) ** 2 + b / lam)


def variance_inflation(n: int, beta0: float, beta1: float, epsilon: float, replicates: int,
                       seed: int = 0) -> dict:
    """Var of the slope fitted on ``X^test`` over Var of the slope fitted on ``X``, with L known.

    Each replicate draws a fresh trajectory L and Poisson data; the expected
    ratio is ``1 / (1 - epsilon)``.
    """
    slopes_full = np.empty(replicates)
    slopes_test = np.empty(replicates)
    for r in range(replicates):
        scen = ScenarioConfig(n=n, p=1, latent_kind="trajectory", beta0=beta0, beta1=beta1, seed=subseed(seed, r))
        X, _, truth = generate(scen)
        pair = count_split(X, epsilon, subseed(seed, r, 1))
        Y = np.column_stack([X.counts[:, 0], pair.test.counts[:, 0]])
        fit = glm.fit_poisson_batch(Y, truth.scores)
        slopes_full[r], slopes_test[r] = fit.coefficients[:, 1]
    ratio = float(np.var(slopes_test, ddof=1) / np.var(slopes_full, ddof=1))
    return {"ratio": ratio, "expected": 1.0 / (1.0 - epsilon), "var_full": float(np.var(slopes_full, ddof=1)),
            "var_test": float(np.var(slopes_test, ddof=1))}


# --------------------------------------------------------------------------
# overdispersion profile
# --------------------------------------------------------------------------


@dataclass
class OverdispersionProfile:
    theta: np.ndarray
    fitted_means: np.ndarray
    ratios: np.ndarray
    histogram: tuple
    fraction_below_one: float
    n_failed: int


def estimate_overdispersion_profile(X: CountMatrix, latent_estimate, gamma: SizeFactors | None = None,
                                    bins: int = 50) -> OverdispersionProfile:
    """Fit an NB GLM of every gene on ``latent_estimate`` and profile ``mean / theta``.

    Genes whose theta diverges get ratio 0 (the Poisson limit). Genes whose
    fit fails are excluded and counted in ``n_failed``.
    """
    z = latent_estimate.regressor() if isinstance(latent_estimate, latent.LatentEstimate) else np.asarray(latent_estimate)
    batch = glm.fit_negbin_batch(X.counts, z, gamma)
    usable = batch.usable
    A = glm.design_matrix(z)
    off = np.zeros(X.n_cells) if gamma is None else np.log(gamma.gamma)
    coef = np.where(usable[:, None], batch.coefficients, np.nan)
    mu = np.exp(A @ coef.T + off[:, None])
    theta = np.where(usable, batch.dispersion, np.nan)
    ratios = (mu / theta[None, :])[:, usable].ravel()
    hist = np.histogram(ratios, bins=bins) if ratios.size else (np.zeros(bins), np.zeros(bins + 1))
    below = float(np.mean(ratios < 1.0)) if ratios.size else float("nan")
    return OverdispersionProfile(theta, mu, ratios, hist, below, int((~usable).sum()))


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------


def scenario_null_two_levels(seed: int = 0) -> ScenarioConfig:
    """n = 200, p = 10, no latent signal, means 1 for genes 0-4 and 10 for genes 5-9."""
    beta0 = np.r_[np.zeros(5), np.full(5, math.log(10.0))]
    return ScenarioConfig(n=200, p=10, latent_kind="none", beta0=beta0, seed=seed)


NULL_TWO_LEVEL_GROUPS = {"lambda_1": list(range(5)), "lambda_10": list(range(5, 10))}


def scenario_overdispersed(b: float | None = None, seed: int = 0) -> ScenarioConfig:
    """n = 200, p = 10, constant mean 5, optional Gamma-Poisson shape ``b``."""
    return ScenarioConfig(n=200, p=10, latent_kind="none", beta0=math.log(5.0), overdispersion_b=b, seed=seed)


SWEEP_B_VALUES = (50.0, 10.0, 5.0, 0.5)


def scenario_simulation_study(latent_kind: str, n: int = 500, p: int = 200, intercepts: str = "mixed",
                              nonnull_fraction: float = 0.1, seed: int = 0):
    """Size factors Gamma(10, 10), log-intercepts log 3 or log 25, a latent trajectory or two clusters.

    Returns ``(scenario, nonnull_mask)``; slopes are set per replicate by
    :func:`run_power_coverage`.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB0]))
    if intercepts == "mixed":
        beta0 = rng.choice([math.log(3.0), math.log(25.0)], size=p)
    elif intercepts == "low":
        beta0 = np.full(p, math.log(3.0))
    elif intercepts == "high":
        beta0 = np.full(p, math.log(25.0))
    else:
        raise InvalidConfigError("intercepts must be 'mixed', 'low' or 'high'")
    nonnull = np.zeros(p, dtype=bool)
    nonnull[: max(1, int(round(nonnull_fraction * p)))] = True
    scen = ScenarioConfig(n=n, p=p, latent_kind=latent_kind, beta0=beta0, size_factor_model="gamma_10_10", seed=seed)
    return scen, nonnull


def beta1_grid(count: int = 5) -> np.ndarray:
    """Equally spaced non-null slopes in [0.18, 3]."""
    return np.linspace(0.18, 3.0, count)


def scenario_cluster_test(seed: int = 0) -> ScenarioConfig:
    """n = 200, p = 10, i.i.d. Poisson(5)."""
    return ScenarioConfig(n=200, p=10, latent_kind="none", beta0=math.log(5.0), seed=seed)


FIG2A_METHODS = ("count_split", "double_dip", "cell_split", "jackstraw_efficient", "pseudotime_de")
PRESETS = ("fig2a", "fig2b", "fig3", "table1", "appendixC")
