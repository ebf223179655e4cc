import math

import numpy as np
import pytest

from lailoss.errors import ConfigError, DimensionError, EmptyBatch
from lailoss.metrics import (
    output_variance,
    read_sensitivity_csv,
    rmse,
    sensitivity,
    sensitivity_report,
    write_sensitivity_csv,
)
from lailoss.mlp import init_model, linear_model


class TestRmse:
    def test_examples(self):
        assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert rmse([3.0, 4.0], [0.0, 0.0]) == pytest.approx(math.sqrt(12.5), abs=1e-15)
        assert rmse(np.arange(5.0) - 2.5, np.arange(5.0)) == 2.5

    def test_errors(self):
        with pytest.raises(DimensionError):
            rmse([1.0], [1.0, 2.0])
        with pytest.raises(EmptyBatch):
            rmse([], [])


class TestOutputVariance:
    def test_constant_model(self):
        assert output_variance(linear_model([0.0, 0.0], 3.0), np.random.default_rng(0).normal(size=(10, 2))) == 0.0

    def test_identity(self):
        assert output_variance(linear_model([1.0]), [[-1.0], [1.0]]) == 1.0

    def test_permutation(self):
        m = init_model([3, 5, 1], seed=1)
        X = np.random.default_rng(1).normal(size=(50, 3))
        assert output_variance(m, X) == pytest.approx(output_variance(m, X[::-1]), rel=1e-14)

    def test_empty(self):
        with pytest.raises(EmptyBatch):
            output_variance(linear_model([1.0]), np.zeros((0, 1)))


class TestSensitivity:
    X = np.random.default_rng(0).normal(size=(100000, 3))

    def test_dead_input(self):
        assert sensitivity(linear_model([1.0, 0.0, 2.0]), self.X, 1) == 0.0

    def test_linear_closed_form(self):
        w = [1.5, -0.7, 3.0]
        m = linear_model(w, 0.2)
        for j in range(3):
            for sigma in (0.5, 1.0):
                s = sensitivity(m, self.X, j, sigma, seed=7)
                assert abs(s / (sigma * math.sqrt(2 / math.pi)) / abs(w[j]) - 1.0) < 0.02

    def test_doubling_sigma(self):
        m = linear_model([1.0, 1.0, 1.0])
        s1, s2 = sensitivity(m, self.X, 0, 1.0, seed=1), sensitivity(m, self.X, 0, 2.0, seed=1)
        assert s2 / s1 == pytest.approx(2.0, rel=1e-12)  # same draws, exact scaling
        assert sensitivity(m, self.X, 0, 2.0, seed=2) / s1 == pytest.approx(2.0, rel=0.02)

    def test_row_order(self):
        m = init_model([3, 6, 1], seed=0)
        a = sensitivity(m, self.X, 2, seed=4)
        b = sensitivity(m, self.X[::-1], 2, seed=4)
        assert a == pytest.approx(b, rel=0.02)

    def test_repeats_and_errors(self):
        m = linear_model([1.0, 1.0, 1.0])
        assert sensitivity(m, self.X[:10], 0, repeats=3) >= 0
        with pytest.raises(ConfigError):
            sensitivity(m, self.X, 0, sigma=0.0)
        with pytest.raises(DimensionError):
            sensitivity(m, self.X, 5)


class TestReport:
    def test_csv_round_trip(self, tmp_path):
        m = linear_model([1.0, 2.0, 3.0])
        X = TestSensitivity.X[:1000]
        rep = sensitivity_report(m, X, ["a", "b", "c"], seed=1)
        assert rep.values.shape == (3,) and np.all(rep.values >= 0)
        write_sensitivity_csv(rep, tmp_path / "s.csv")
        back = read_sensitivity_csv(tmp_path / "s.csv")
        assert back.feature_names == ["a", "b", "c"]
        np.testing.assert_array_equal(back.values, rep.values)

    def test_percent_change(self, tmp_path):
        X = TestSensitivity.X[:1000]
        base = sensitivity_report(linear_model([1.0, 2.0, 3.0]), X, seed=1)
        new = sensitivity_report(linear_model([1.0, 1.0, 6.0]), X, seed=1)
        write_sensitivity_csv(new, tmp_path / "s.csv", baseline=base)
        np.testing.assert_allclose(new.percent_change(), [0.0, -50.0, 100.0], atol=1e-10)
        rows = (tmp_path / "s.csv").read_text().splitlines()
        assert rows[0] == "feature_name,sensitivity,percent_change"
        assert rows[2].endswith(",-50")
