import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from countsplit.count_matrix import (
    CountMatrix,
    SizeFactors,
    estimate_size_factors,
    load_matrix,
    log_normalize,
    save_matrix,
)
from countsplit.errors import (
    DegenerateCellError,
    DimensionMismatchError,
    InvalidConfigError,
    MatrixIOError,
    MatrixParseError,
)

count_arrays = arrays(np.int64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.integers(0, 10_000))


class TestLoad:
    def test_csv_example(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("1,0\n2,5\n0,3")
        X = load_matrix(f)
        np.testing.assert_array_equal(X.counts, [[1, 0], [2, 5], [0, 3]])
        assert X.gene_names is None

    def test_csv_header_gives_gene_names(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("a,b\n1,2\n")
        X = load_matrix(f)
        assert X.gene_names == ("a", "b")
        np.testing.assert_array_equal(X.counts, [[1, 2]])

    def test_negative_entry_names_cell(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("1,0\n2,-1\n")
        with pytest.raises(MatrixParseError) as info:
            load_matrix(f)
        assert (info.value.row, info.value.col) == (1, 1)

    @pytest.mark.parametrize("token", ["1.5", "abc"])
    def test_bad_tokens(self, tmp_path, token):
        f = tmp_path / "x.csv"
        f.write_text(f"1,2\n1,{token}\n")
        with pytest.raises(MatrixParseError) as info:
            load_matrix(f)
        assert (info.value.row, info.value.col) == (1, 1)

    def test_ragged_rows(self, tmp_path):
        f = tmp_path / "x.csv"
        f.write_text("1,2\n3\n")
        with pytest.raises(MatrixParseError):
            load_matrix(f)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MatrixIOError):
            load_matrix(tmp_path / "nope.csv")

    def test_matrix_market_fill_in(self, tmp_path):
        f = tmp_path / "x.mtx"
        scipy.io.mmwrite(str(f), scipy.sparse.coo_matrix(([3, 7], ([0, 1], [1, 0])), shape=(2, 2)), field="integer")
        np.testing.assert_array_equal(load_matrix(f).counts, [[0, 3], [7, 0]])

    def test_matrix_market_fractional(self, tmp_path):
        f = tmp_path / "x.mtx"
        scipy.io.mmwrite(str(f), scipy.sparse.coo_matrix(([0.5], ([1], [0])), shape=(2, 2)))
        with pytest.raises(MatrixParseError) as info:
            load_matrix(f)
        assert (info.value.row, info.value.col) == (1, 0)

    def test_unknown_format(self, tmp_path):
        with pytest.raises(InvalidConfigError):
            load_matrix(tmp_path / "x.csv", format="hdf5")


@settings(max_examples=40, deadline=None)
@given(counts=count_arrays, fmt=st.sampled_from(["csv_dense", "matrix_market"]))
def test_round_trip(tmp_path_factory, counts, fmt):
    path = tmp_path_factory.mktemp("rt") / ("x.mtx" if fmt == "matrix_market" else "x.csv")
    X = CountMatrix(counts)
    save_matrix(X, path, fmt)
    np.testing.assert_array_equal(load_matrix(path, fmt).counts, X.counts)


def test_round_trip_keeps_gene_names(tmp_path):
    X = CountMatrix(np.arange(6).reshape(3, 2), gene_names=["g1", "g2"])
    save_matrix(X, tmp_path / "x.csv")
    assert load_matrix(tmp_path / "x.csv").gene_names == ("g1", "g2")


class TestCountMatrix:
    def test_read_only(self):
        X = CountMatrix([[1, 2]])
        with pytest.raises(ValueError):
            X.counts[0, 0] = 5

    def test_rejects_fractional_and_negative(self):
        with pytest.raises(MatrixParseError):
            CountMatrix(np.array([[0.5]]))
        with pytest.raises(MatrixParseError):
            CountMatrix([[1, -2]])

    def test_rejects_bad_shape_and_names(self):
        with pytest.raises(DimensionMismatchError):
            CountMatrix(np.zeros((0, 3), dtype=int))
        with pytest.raises(DimensionMismatchError):
            CountMatrix([[1, 2]], gene_names=["a"])

    def test_take(self):
        X = CountMatrix(np.arange(12).reshape(4, 3), gene_names="abc", cell_names="wxyz")
        sub = X.take_rows([2, 0]).take_cols([1])
        np.testing.assert_array_equal(sub.counts, [[7], [1]])
        assert sub.gene_names == ("b",) and sub.cell_names == ("y", "w")


class TestSizeFactors:
    def test_equal_sums(self):
        np.testing.assert_allclose(estimate_size_factors(CountMatrix([[5, 5], [10, 0], [3, 7]])).gamma, 1.0)

    def test_hand_example(self):
        np.testing.assert_allclose(estimate_size_factors(CountMatrix([[1, 0], [2, 2]])).gamma, [0.5, 2.0])

    def test_zero_row(self):
        with pytest.raises(DegenerateCellError):
            estimate_size_factors(CountMatrix([[1, 2], [0, 0]]))

    @settings(max_examples=50, deadline=None)
    @given(counts=arrays(np.int64, st.tuples(st.integers(1, 8), st.integers(1, 5)), elements=st.integers(1, 1000)),
           scale=st.integers(2, 9))
    def test_geometric_mean_one_and_scale_equivariance(self, counts, scale):
        g = estimate_size_factors(CountMatrix(counts)).gamma
        assert abs(np.log(g).mean()) < 1e-12
        np.testing.assert_allclose(estimate_size_factors(CountMatrix(counts * scale)).gamma, g, rtol=1e-12)

    def test_validation(self):
        with pytest.raises(InvalidConfigError):
            SizeFactors([1.0, 0.0])
        np.testing.assert_array_equal(SizeFactors.unit(3).gamma, 1.0)


class TestLogNormalize:
    @pytest.mark.parametrize("x,g,expected", [(0, 1.0, 0.0), (9, 1.0, math.log(10)), (4, 2.0, math.log(3))])
    def test_examples(self, x, g, expected):
        assert log_normalize(CountMatrix([[x]]), SizeFactors([g]))[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_errors(self):
        X = CountMatrix([[1, 2], [3, 4]])
        with pytest.raises(DimensionMismatchError):
            log_normalize(X, SizeFactors([1.0]))
        with pytest.raises(InvalidConfigError):
            log_normalize(X, SizeFactors([1.0, 1.0]), pseudocount=0.0)

    @settings(max_examples=50, deadline=None)
    @given(counts=count_arrays)
    def test_monotone_in_counts(self, counts):
        g = np.linspace(0.5, 2.0, counts.shape[0])
        a = log_normalize(counts, g)
        b = log_normalize(counts + 1, g)
        assert np.all(b > a)
