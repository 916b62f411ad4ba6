import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import adjusted_rand_score

from countsplit import NUMBA_AVAILABLE, _kernels, latent, use_backend
from countsplit.count_matrix import SizeFactors, log_normalize
from countsplit.errors import ConstantInputError, DegenerateMatrixError, TooFewPointsError
from countsplit.simulation import ScenarioConfig, generate


class TestFirstPc:
    def test_hand_example(self):
        scores, loading = latent.first_pc([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(loading, np.array([1.0, -1.0]) / math.sqrt(2), atol=1e-10)
        np.testing.assert_allclose(scores, [1 / math.sqrt(2), -1 / math.sqrt(2)], atol=1e-10)

    def test_identical_rows(self):
        with pytest.raises(DegenerateMatrixError):
            latent.first_pc(np.tile([1.0, 2.0, 3.0], (5, 1)))

    def test_too_few_rows(self):
        with pytest.raises(TooFewPointsError):
            latent.first_pc([[1.0, 2.0]])

    @pytest.mark.parametrize("shape", [(50, 8), (8, 50)])
    def test_matches_svd_oracle(self, shape):
        M = np.random.default_rng(1).standard_normal(shape) * np.linspace(1, 3, shape[1])
        scores, loading = latent.first_pc(M)
        Mc = M - M.mean(axis=0)
        v = np.linalg.svd(Mc, full_matrices=False)[2][0]
        assert abs(loading @ v) == pytest.approx(1.0, abs=1e-8)
        assert latent.abs_correlation(scores, Mc @ v) == pytest.approx(1.0, abs=1e-8)

    def test_variance_optimal(self):
        rng = np.random.default_rng(2)
        M = rng.standard_normal((100, 6)) @ rng.standard_normal((6, 6))
        scores, _ = latent.first_pc(M)
        Mc = M - M.mean(axis=0)
        for d in rng.standard_normal((100, 6)):
            assert scores.var() >= (Mc @ (d / np.linalg.norm(d))).var() - 1e-10

    def test_sign_rule(self):
        M = np.random.default_rng(3).standard_normal((30, 5))
        _, loading = latent.first_pc(M)
        assert loading[np.argmax(np.abs(loading))] > 0
        _, flipped = latent.first_pc(-M)
        np.testing.assert_allclose(flipped, loading, atol=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(M=arrays(np.float64, (12, 4), elements=st.floats(-10, 10)), shift=st.floats(-100, 100),
           col=st.integers(0, 3))
    def test_column_shift_invariance(self, M, shift, col):
        if np.ptp(M, axis=0).max() < 1e-3:
            return
        ev = np.linalg.eigvalsh(np.cov(M.T))
        if ev[-1] - ev[-2] < 1e-3 * ev[-1]:
            return
        a, _ = latent.first_pc(M)
        M2 = M.copy()
        M2[:, col] += shift
        b, _ = latent.first_pc(M2)
        # eigenvalue-based stopping leaves vector error of order sqrt(tol)
        np.testing.assert_allclose(b, a, atol=1e-3 * max(1.0, np.abs(a).max()))

    def test_recovers_trajectory(self):
        scen = ScenarioConfig(n=500, p=100, latent_kind="trajectory", beta0=math.log(25.0), beta1=3.0,
                              size_factor_model="gamma_10_10", seed=4)
        X, gamma, truth = generate(scen)
        scores, _ = latent.first_pc(log_normalize(X, gamma))
        assert latent.abs_correlation(truth.scores, scores) > 0.95


class TestKmeans:
    def test_separated_blobs(self):
        rng = np.random.default_rng(5)
        truth = np.repeat([0, 1], 50)
        M = rng.standard_normal((100, 2)) + 10.0 * truth[:, None]
        est = latent.kmeans(M, 2, seed=1)
        assert latent.adjusted_rand_index(est.labels, truth) == 1.0
        assert est.labels[0] == 0

    def test_n_equals_k(self):
        M = np.array([[0.0, 1.0], [5.0, 5.0], [9.0, 0.0]])
        est = latent.kmeans(M, 3, seed=0)
        assert sorted(est.labels) == [0, 1, 2]
        assert latent.kmeans_objective(M, est.labels) == 0.0

    def test_too_few_points(self):
        with pytest.raises(TooFewPointsError):
            latent.kmeans(np.zeros((1, 2)), 2)

    def test_reproducible(self):
        M = np.random.default_rng(6).standard_normal((60, 3))
        np.testing.assert_array_equal(latent.kmeans(M, 3, seed=9).labels, latent.kmeans(M, 3, seed=9).labels)

    @pytest.mark.parametrize("seed", range(10))
    def test_lloyd_objective_non_increasing(self, seed):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((80, 3))
        _, _, _, history = _kernels.lloyd(M, M[rng.choice(80, 3, replace=False)].copy(), 300)
        assert np.all(np.diff(history) <= 1e-9 * history[0])

    def test_objective_not_worse_than_sklearn(self):
        from sklearn.cluster import KMeans

        M = np.random.default_rng(7).standard_normal((200, 4))
        ours = latent.kmeans_objective(M, latent.kmeans(M, 2, seed=0).labels)
        ref = KMeans(2, n_init=10, random_state=0).fit(M).inertia_
        assert ours <= ref * (1 + 1e-6)

    @pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
    def test_backends_agree(self):
        M = np.random.default_rng(8).standard_normal((150, 5))
        with use_backend("numba"):
            a = latent.kmeans(M, 3, seed=2)
        with use_backend("numpy"):
            b = latent.kmeans(M, 3, seed=2)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_regressor(self):
        est = latent.LatentEstimate("clusters", labels=[0, 1, 2, 1], k=3)
        np.testing.assert_array_equal(est.regressor(), [[0, 0], [1, 0], [0, 1], [1, 0]])
        two = latent.LatentEstimate("clusters", labels=[0, 1, 1], k=2)
        np.testing.assert_array_equal(two.regressor(), [0.0, 1.0, 1.0])


class TestPermute:
    def test_length_one(self):
        np.testing.assert_array_equal(latent.permute([7], 0), [7])

    @settings(max_examples=50, deadline=None)
    @given(v=st.lists(st.integers(-5, 5), min_size=1, max_size=30), seed=st.integers(0, 2**32))
    def test_multiset_preserved(self, v, seed):
        assert sorted(latent.permute(v, seed)) == sorted(v)

    def test_uniform_over_orderings(self):
        rng = np.random.default_rng(9)
        counts = {}
        for _ in range(100_000):
            key = tuple(latent.permute([1, 2, 3], rng))
            counts[key] = counts.get(key, 0) + 1
        assert set(counts) == set(itertools.permutations([1, 2, 3]))
        for c in counts.values():
            assert c / 100_000 == pytest.approx(1 / 6, abs=0.01)


class TestAgreement:
    def test_abs_correlation_examples(self):
        a = np.array([1.0, 4.0, 2.0])
        assert latent.abs_correlation(a, a) == pytest.approx(1.0)
        assert latent.abs_correlation(a, -a) == pytest.approx(1.0)
        assert latent.abs_correlation([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5)
        with pytest.raises(ConstantInputError):
            latent.abs_correlation([1, 1, 1], [1, 2, 3])

    def test_ari_examples(self):
        assert latent.adjusted_rand_index([0, 0, 1, 1], [5, 5, 3, 3]) == 1.0
        assert latent.adjusted_rand_index([1, 1, 2, 2], [1, 1, 1, 2]) == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(a=st.lists(st.integers(0, 3), min_size=2, max_size=40), data=st.data())
    def test_ari_matches_sklearn_and_is_symmetric(self, a, data):
        b = data.draw(st.lists(st.integers(0, 3), min_size=len(a), max_size=len(a)))
        ours = latent.adjusted_rand_index(a, b)
        assert ours == pytest.approx(adjusted_rand_score(a, b), abs=1e-10)
        assert ours == pytest.approx(latent.adjusted_rand_index(b, a), abs=1e-12)
        renamed = [{0: 3, 1: 0, 2: 1, 3: 2}[x] for x in a]
        assert ours == pytest.approx(latent.adjusted_rand_index(renamed, b), abs=1e-12)

    def test_ari_independent_partitions_average_zero(self):
        rng = np.random.default_rng(10)
        vals = [latent.adjusted_rand_index(rng.integers(0, 2, 50), rng.integers(0, 2, 50)) for _ in range(10_000)]
        assert abs(np.mean(vals)) < 0.02


def test_size_factor_type_accepted():
    X = np.random.default_rng(11).poisson(5, (20, 4))
    scores, _ = latent.first_pc(log_normalize(X, SizeFactors(np.ones(20))))
    assert scores.shape == (20,)
