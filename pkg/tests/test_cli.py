import csv
import json

import numpy as np
import pytest

from countsplit import cli
from countsplit.count_matrix import CountMatrix, load_matrix, save_matrix
from countsplit.simulation import ScenarioConfig, generate


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


@pytest.fixture
def matrix_csv(workdir):
    X, _, _ = generate(ScenarioConfig(n=80, p=6, latent_kind="trajectory", beta0=1.5, beta1=0.5, seed=1))
    path = workdir / "x.csv"
    save_matrix(X, str(path), "csv_dense")
    return str(path), X


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestSplit:
    def test_outputs_and_manifest(self, matrix_csv):
        path, X = matrix_csv
        assert cli.main(["split", "--input", path, "--epsilon", "0.3", "--seed", "4", "--out-prefix", "s"]) == 0
        train, test = load_matrix("s.train.csv"), load_matrix("s.test.csv")
        np.testing.assert_array_equal(train.counts + test.counts, X.counts)
        man = json.load(open("s.manifest.json"))
        assert man["command"] == "split" and man["seed"] == 4
        assert man["config_echo"]["epsilon"] == 0.3 and man["config_echo"]["format"] is None
        assert "s.manifest.json" in man["artifact_paths"]

    def test_matrix_market(self, workdir):
        save_matrix(CountMatrix(np.arange(12).reshape(4, 3)), "m.mtx", "matrix_market")
        assert cli.main(["split", "--input", "m.mtx", "--out-prefix", "m"]) == 0
        assert (workdir / "m.train.mtx").exists()

    def test_invalid_epsilon(self, matrix_csv):
        assert cli.main(["split", "--input", matrix_csv[0], "--epsilon", "1.0"]) == 2

    def test_missing_file(self, workdir):
        assert cli.main(["split", "--input", "nope.csv"]) == 3

    def test_config_then_flags(self, matrix_csv):
        json.dump({"epsilon": 0.2, "seed": 9}, open("c.json", "w"))
        assert cli.main(["split", "--input", matrix_csv[0], "--config", "c.json", "--seed", "3"]) == 0
        echo = json.load(open("countsplit.manifest.json"))["config_echo"]
        assert echo["epsilon"] == 0.2 and echo["seed"] == 3

    def test_unknown_config_key(self, matrix_csv):
        json.dump({"epsilonn": 0.2}, open("c.json", "w"))
        assert cli.main(["split", "--input", matrix_csv[0], "--config", "c.json"]) == 2

    def test_bad_flag_exits_2(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["split", "--bogus"])
        assert info.value.code == 2


class TestDe:
    def test_countsplit_and_doubledip_share_schema(self, matrix_csv):
        path, X = matrix_csv
        assert cli.main(["de", "--input", path, "--method", "countsplit", "--out-prefix", "a"]) == 0
        assert cli.main(["de", "--input", path, "--method", "doubledip", "--out-prefix", "b"]) == 0
        a, b = _rows("a.csv"), _rows("b.csv")
        assert a[0] == b[0]
        assert len(a) == len(b) == X.n_genes + 1

    def test_same_seed_same_bytes(self, matrix_csv):
        for prefix in ("a", "b"):
            assert cli.main(["de", "--input", matrix_csv[0], "--seed", "5", "--out-prefix", prefix]) == 0
        assert open("a.csv", "rb").read() == open("b.csv", "rb").read()

    def test_unknown_method(self, matrix_csv):
        assert cli.main(["de", "--input", matrix_csv[0], "--method", "magic"]) == 2

    def test_known_gamma_needs_size_factors(self, matrix_csv):
        assert cli.main(["de", "--input", matrix_csv[0], "--gamma", "known"]) == 2

    def test_known_gamma_with_file(self, matrix_csv):
        np.savetxt("g.csv", np.ones(80), delimiter=",")
        assert cli.main(["de", "--input", matrix_csv[0], "--gamma", "known", "--size-factors", "g.csv"]) == 0
        assert cli.main(["de", "--input", matrix_csv[0], "--gamma", "known", "--size-factors", "none.csv"]) == 3
        assert cli.main(["de", "--input", matrix_csv[0], "--gamma", "known", "--size-factors", "x.csv"]) == 2

    def test_singleton_cluster_is_numeric_failure(self, workdir):
        counts = np.zeros((20, 4), dtype=int)
        counts[0] = 1000
        save_matrix(CountMatrix(counts), "c.csv", "csv_dense")
        assert cli.main(["de", "--input", "c.csv", "--method", "cluster_mean_naive"]) == 4


class TestSimulate:
    def test_fig2b_small(self, workdir):
        assert cli.main(["simulate", "--preset", "fig2b", "--replicates", "2", "--out-prefix", "f"]) == 0
        rows = _rows("f.summary.csv")
        assert tuple(rows[0]) == cli.SUMMARY_COLUMNS
        assert any(r[5] == "ks_distance" for r in rows[1:])

    def test_zero_replicates(self, workdir):
        assert cli.main(["simulate", "--preset", "fig2b", "--replicates", "0"]) == 2

    def test_unknown_preset(self, workdir):
        assert cli.main(["simulate", "--preset", "fig9"]) == 2

    def test_free_form_needs_scenario(self, workdir):
        assert cli.main(["simulate"]) == 2

    def test_free_form(self, workdir):
        cfg = {"scenario": {"n": 50, "p": 4, "beta0": 1.0}, "method_config": {"method": "double_dip"}}
        json.dump(cfg, open("c.json", "w"))
        assert cli.main(["simulate", "--config", "c.json", "--replicates", "2", "--out-prefix", "ff"]) == 0
        assert any(r[2] == "double_dip" for r in _rows("ff.summary.csv")[1:])


class TestReport:
    def _summary(self, name, version=1):
        with open(name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cli.SUMMARY_COLUMNS)
            w.writerow([version, "s", "count_split", 0.5, "all", "ks_distance", 0.01])

    def test_merge(self, workdir):
        self._summary("a.csv")
        self._summary("b.csv")
        assert cli.main(["report", "--inputs", "a.csv", "b.csv", "--out", "r.csv"]) == 0
        rows = _rows("r.csv")
        assert rows[0][-1] == "source" and len(rows) == 3

    def test_conflicting_schema(self, workdir):
        self._summary("a.csv", 1)
        self._summary("b.csv", 2)
        assert cli.main(["report", "--inputs", "a.csv", "b.csv"]) == 2

    def test_empty(self, workdir):
        assert cli.main(["report", "--inputs"]) == 2

    def test_not_a_summary(self, workdir):
        open("a.csv", "w").write("x,y\n1,2\n")
        assert cli.main(["report", "--inputs", "a.csv"]) == 2
