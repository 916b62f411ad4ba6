import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from countsplit import glm, latent, pipelines as pl
from countsplit.count_matrix import CountMatrix, log_normalize
from countsplit.errors import (
    DegenerateClustersError,
    InvalidConfigError,
    InvalidFractionError,
    TooFewPointsError,
)
from countsplit.pipelines import MethodConfig
from countsplit.simulation import ScenarioConfig, generate, scenario_null_two_levels


def _null(seed=0):
    return generate(scenario_null_two_levels(seed))[0]


def _signal(seed=0, n=300, p=20, b1=1.0):
    beta1 = np.r_[np.full(p // 2, b1), np.zeros(p - p // 2)]
    scen = ScenarioConfig(n=n, p=p, latent_kind="trajectory", beta0=math.log(10.0), beta1=beta1, seed=seed)
    return generate(scen)


class TestConfig:
    def test_defaults_and_fraction(self):
        assert MethodConfig(method="cell_split").effective_fraction == 0.5
        assert MethodConfig(method="pseudotime_de").effective_fraction == 0.8
        assert MethodConfig(method="cell_split", fraction=0.3).effective_fraction == 0.3

    @pytest.mark.parametrize("kw", [dict(method="nope"), dict(estimator="umap"), dict(family="gaussian"),
                                    dict(epsilon=1.0), dict(method="jackstraw_full", B=0), dict(seed=-1),
                                    dict(method="jackstraw_efficient", s=11)])
    def test_invalid(self, kw):
        with pytest.raises(InvalidConfigError):
            MethodConfig(**kw).validate(n_genes=10)

    def test_subseed_is_deterministic_and_distinct(self):
        assert pl.subseed(5, 1, 2) == pl.subseed(5, 1, 2)
        assert len({pl.subseed(5, k) for k in range(1000)}) == 1000


class TestCountSplit:
    def test_bit_reproducible(self):
        X = _null()
        a = pl.de_count_split(X, cfg=MethodConfig(seed=3))
        b = pl.de_count_split(X, cfg=MethodConfig(seed=3))
        assert a.to_csv() == b.to_csv()

    def test_all_zero_test_column_is_unconverged(self):
        counts = _null().counts.copy()
        counts[:, 0] = 0
        rep = pl.de_count_split(CountMatrix(counts), cfg=MethodConfig(seed=1))
        assert rep.results[0].status == pl.STATUS_UNCONVERGED and rep.results[0].p_value is None
        assert rep.n_missing == 1
        assert all(r.status == pl.STATUS_OK for r in rep.results[1:])

    def test_strong_signal_detected(self):
        hits = 0
        for r in range(20):
            scen = ScenarioConfig(n=2700, p=10, latent_kind="trajectory", beta0=math.log(25.0),
                                  beta1=np.r_[3.0, np.full(9, 0.5)], size_factor_model="gamma_10_10", seed=r)
            X, g, _ = generate(scen)
            hits += pl.de_count_split(X, "known", MethodConfig(seed=r), gamma=g).results[0].p_value < 0.05
        assert hits / 20 > 0.9

    @pytest.mark.parametrize("estimator", ["pc1_trajectory", "kmeans2"])
    def test_null_calibration(self, estimator):
        p = np.concatenate([pl.de_count_split(_null(r), "unit", MethodConfig(estimator=estimator, seed=r)).p_values()
                            for r in range(150)])
        assert stats.kstest(p, "uniform").pvalue > 1e-3

    def test_negative_binomial_family(self):
        X, g, _ = _signal(1)
        rep = pl.de_count_split(X, "known", MethodConfig(family="negative_binomial", seed=2), gamma=g)
        assert rep.n_theta_diverged > 0
        assert rep.n_missing == 0

    def test_known_policy_needs_size_factors(self):
        with pytest.raises(InvalidConfigError):
            pl.de_count_split(_null(), "known")
        with pytest.raises(InvalidConfigError):
            pl.de_count_split(_null(), "sometimes")


class TestBaselines:
    def test_double_dip_gives_every_gene_a_p_value(self):
        rep = pl.de_double_dip(_null(), "unit")
        assert rep.n_missing == 0 and len(rep.results) == 10

    def test_double_dip_anti_conservative(self):
        dd, cs = [], []
        for r in range(150):
            X = _null(r)
            dd.append(pl.de_double_dip(X, "unit", MethodConfig(seed=r)).p_values())
            cs.append(pl.de_count_split(X, "unit", MethodConfig(seed=r)).p_values())
        dd, cs = np.concatenate(dd), np.concatenate(cs)
        assert (dd < 0.05).mean() > 0.05
        assert stats.kstest(dd, "uniform").statistic > stats.kstest(cs, "uniform").statistic

    def test_cell_split_projects_test_rows_on_train_axis(self):
        X, _, _ = _signal(2)
        rep = pl.de_cell_split(X, "unit", MethodConfig(seed=4))
        part = pl.cell_split(X, 0.5, 4)
        M = log_normalize(X.counts, np.ones(X.n_cells))
        expected = (M[part.test_rows] - M[part.train_rows].mean(axis=0)) @ rep.latent.loading
        np.testing.assert_allclose(rep.latent.scores, expected, atol=1e-12)
        np.testing.assert_array_equal(rep.latent_rows, part.test_rows)

    def test_cell_split_invalid_fraction(self):
        with pytest.raises((InvalidFractionError, InvalidConfigError)):
            pl.de_cell_split(CountMatrix(np.ones((2, 3), dtype=int)), "unit", MethodConfig(fraction=0.999))

    def test_cell_split_kmeans(self):
        X, _, _ = _signal(3)
        rep = pl.de_cell_split(X, "unit", MethodConfig(estimator="kmeans2", seed=1))
        assert rep.latent.kind == "clusters" and rep.latent.n_cells == len(rep.latent_rows)

    def test_gene_split_bookkeeping(self):
        X = _null(4)
        rep = pl.de_gene_split(X, "unit", MethodConfig(seed=2))
        part = pl.gene_split(X, 2)
        keys = {r.gene_index: r.latent_key for r in rep.results}
        assert all(keys[j] == "train_half" for j in part.test_cols)
        assert all(keys[j] == "test_half" for j in part.train_cols)
        assert set(rep.latents) == {"train_half", "test_half"}

    def test_gene_split_two_genes(self):
        X = CountMatrix(np.random.default_rng(0).poisson(5, (50, 2)))
        rep = pl.de_gene_split(X, "unit")
        assert rep.n_missing == 0

    def test_test_double_dip_uses_the_count_split_test_matrix(self):
        X = _null(5)
        cfg = MethodConfig(seed=8)
        tdd = pl.de_test_double_dip(X, "unit", cfg)
        test = pl.count_split(X, 0.5, 8).test
        ref = pl.de_double_dip(test, "unit", cfg)
        np.testing.assert_allclose(tdd.p_values(), ref.p_values())


class TestResampling:
    def test_efficient_jackstraw_granularity(self):
        cfg = MethodConfig(method="jackstraw_efficient", B=7, s=3, seed=1)
        p = pl.jackstraw(_null(), "unit", cfg, "efficient").p_values()
        assert np.allclose(p * 21, np.round(p * 21))
        assert np.all((p >= 0) & (p <= 1))

    def test_full_jackstraw_granularity(self):
        cfg = MethodConfig(method="jackstraw_full", B=5, seed=1)
        p = pl.jackstraw(_null(), "unit", cfg, "full").p_values()
        assert np.allclose(p * 5, np.round(p * 5))

    def test_extreme_observed_statistic_gives_zero(self):
        X, _, _ = _signal(6, b1=2.0)
        cfg = MethodConfig(method="jackstraw_efficient", B=10, s=5, seed=2)
        p = pl.jackstraw(X, "unit", cfg, "efficient").p_values()
        assert np.all(p[:10] == 0.0)

    def test_plus_one(self):
        X, _, _ = _signal(6, b1=2.0)
        cfg = MethodConfig(method="jackstraw_efficient", B=10, s=5, seed=2, plus_one=True)
        p = pl.jackstraw(X, "unit", cfg, "efficient").p_values()
        assert np.allclose(p[:10], 1.0 / 51.0)

    def test_pseudotime_single_round(self):
        p = pl.pseudotime_de(_null(), "unit", MethodConfig(method="pseudotime_de", B=1, seed=3)).p_values()
        assert set(np.unique(p)) <= {0.0, 1.0}

    def test_pseudotime_granularity_and_statistic(self):
        cfg = MethodConfig(method="pseudotime_de", B=8, seed=3)
        rep = pl.pseudotime_de(_null(), "unit", cfg)
        p = rep.p_values()
        assert np.allclose(p * 8, np.round(p * 8))
        dd = pl.de_double_dip(_null(), "unit", cfg)
        np.testing.assert_allclose(rep.estimates(), dd.estimates())

    def test_bad_variant(self):
        with pytest.raises(InvalidConfigError):
            pl.jackstraw(_null(), "unit", variant="half")


class TestClusterMean:
    def test_shifted_populations_rejected(self):
        rng = np.random.default_rng(0)
        rejections = {"naive": 0, "count_split": 0}
        for r in range(50):
            X = CountMatrix(np.r_[rng.poisson(2, (100, 10)), rng.poisson(20, (100, 10))])
            for v in rejections:
                rejections[v] += pl.cluster_mean_test(X, MethodConfig(seed=r), v).p_value < 0.05
        assert all(c / 50 > 0.99 for c in rejections.values())

    def test_singleton_is_degenerate(self):
        counts = np.full((20, 3), 2)
        counts[0] = 50
        X = CountMatrix(counts)
        with pytest.raises(DegenerateClustersError):
            pl.cluster_mean_test(X, variant="naive")
        res = pl.cluster_mean_test(X, variant="naive", allow_singletons=True)
        assert res.sizes in ((1, 19), (19, 1))

    def test_too_few_cells(self):
        with pytest.raises(TooFewPointsError):
            pl.cluster_mean_test(CountMatrix(np.ones((3, 2), dtype=int)))

    def test_statistic_formula(self):
        rng = np.random.default_rng(1)
        X = CountMatrix(np.r_[rng.poisson(3, (15, 4)), rng.poisson(9, (15, 4))])
        res = pl.cluster_mean_test(X, variant="naive")
        M = np.log1p(X.counts)
        lab = res.labels
        diff = np.linalg.norm(M[lab == 0].mean(0) - M[lab == 1].mean(0))
        sigma = np.sqrt(((M - M.mean(0)) ** 2).sum() / (30 * 4 - 4))
        stat = diff / (sigma * np.sqrt(1 / res.sizes[0] + 1 / res.sizes[1]))
        assert res.statistic == pytest.approx(stat)
        assert res.p_value == pytest.approx(stats.chi2.sf(stat ** 2, 4))


def test_slope_sign_invariance_under_relabeling():
    X, _, _ = _signal(7)
    est = latent.kmeans(log_normalize(X.counts, np.ones(X.n_cells)), 2, seed=0)
    a = glm.fit_poisson_batch(X.counts, est.labels.astype(float))
    b = glm.fit_poisson_batch(X.counts, 1.0 - est.labels)
    np.testing.assert_allclose(b.coefficients[:, 1], -a.coefficients[:, 1], atol=1e-8)
    za = a.coefficients[:, 1] / a.standard_errors[:, 1]
    zb = b.coefficients[:, 1] / b.standard_errors[:, 1]
    np.testing.assert_allclose(np.abs(za), np.abs(zb), rtol=1e-6)


class TestDispatchAndReports:
    def test_run_method_dispatch(self):
        X = _null()
        for m in ("count_split", "double_dip", "cell_split", "gene_split"):
            assert pl.run_method(X, MethodConfig(method=m), "unit").method.method == m
        with pytest.raises(InvalidConfigError):
            pl.run_method(X, MethodConfig(method="cluster_mean_naive"), "unit")

    def test_compare_shares_split(self):
        out = pl.compare(_null(), MethodConfig(seed=4), "unit")
        assert list(out) == ["double_dip", "count_split", "test_double_dip"]

    def test_serialisation(self, tmp_path):
        X = CountMatrix(_null().counts, gene_names=[f"g{j}" for j in range(10)])
        rep = pl.de_count_split(X, "unit", MethodConfig(seed=1))
        text = rep.to_csv(tmp_path / "r.csv")
        lines = text.strip().splitlines()
        assert lines[0] == "gene_index,gene_name,latent,estimate,std_error,p_value,status"
        assert lines[1].split(",")[1] == "g0" and len(lines) == 11
        d = json.loads(rep.to_json(tmp_path / "r.json"))
        assert d["schema_version"] == pl.SCHEMA_VERSION
        assert d["method"]["seed"] == 1 and len(d["results"]) == 10
        assert len(d["latent"]["main"]["values"]) == X.n_cells

    def test_config_replace_keeps_validation(self):
        with pytest.raises(InvalidConfigError):
            pl.run_method(_null(), replace(MethodConfig(), method="bogus"))
