#!/usr/bin/env python3
"""
Test suite for dataset generation and CSV ingestion
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from datagen import (GENERATORS, KEPLER_CONSTANTS, SPEED_OF_LIGHT, NoiseSpec, gen_autoregressive, gen_linear5,
                     gen_multicollinear, gen_quartic, gen_relativistic, gen_stefan_boltzmann, kepler_data,
                     load_csv, load_inputs, relativistic_share)
from errors import ConfigurationError, DataError
from pipeline import vif
from storage import LocalStorageBackend


@pytest.fixture
def write_csv(tmp_path):
    """Write text to a CSV file and return its path"""
    def _write(text, name="data.csv"):
        path = tmp_path / name
        path.write_text(text)
        return str(path)
    return _write


class TestNoiseSpec:
    """Test noise definitions"""

    def test_level_is_percent_of_signal_std(self):
        signal = np.array([0.0, 2.0, 4.0, 6.0])
        assert NoiseSpec(level=50.0).sigma(signal) == pytest.approx(0.5 * np.std(signal))

    def test_variance(self):
        assert NoiseSpec(variance=9.0).sigma(np.ones(3)) == pytest.approx(3.0)

    def test_default_is_noiseless(self):
        np.testing.assert_array_equal(NoiseSpec().sample(np.arange(5.0)), np.zeros(5))

    def test_exclusive_and_non_negative(self):
        with pytest.raises(ConfigurationError):
            NoiseSpec(level=1.0, variance=1.0)
        with pytest.raises(ConfigurationError):
            NoiseSpec(level=-5.0)


class TestGenerators:
    """Test the artificial datasets and their ground truth"""

    def test_linear5_all_ones_row(self):
        data = gen_linear5(20)
        assert data.noiseless()[0] == pytest.approx(data.X[0] @ [-2.8, -2.7, -5.3, 4.3, 9.0])
        assert float(np.ones(5) @ data.true_coefficients) == pytest.approx(2.5)

    def test_noiseless_output_matches_truth(self):
        data = gen_linear5(50, NoiseSpec(level=0.0, seed=4))
        np.testing.assert_allclose(data.y, data.noiseless(), rtol=1e-12)
        assert [t.display for t in data.true_support] == ['X0', 'X1', 'X2', 'X3', 'X4']

    def test_seeded(self):
        first = gen_linear5(30, NoiseSpec(level=10.0, seed=3))
        second = gen_linear5(30, NoiseSpec(level=10.0, seed=3))
        np.testing.assert_array_equal(first.y, second.y)
        assert not np.array_equal(first.y, gen_linear5(30, NoiseSpec(level=10.0, seed=4)).y)

    def test_noise_level_scales_residual(self):
        data = gen_linear5(5000, NoiseSpec(level=20.0, seed=0))
        residual = data.y - data.noiseless()
        assert np.std(residual) == pytest.approx(0.2 * np.std(data.noiseless()), rel=0.05)

    def test_multicollinear_duplicated_columns(self):
        data = gen_multicollinear(100, NoiseSpec(level=0.0), NoiseSpec(level=0.0))
        np.testing.assert_array_equal(data.X[:, 0], data.X[:, 1])
        assert np.all(np.isinf(vif(data.X)))

    def test_relativistic_formula(self):
        c = SPEED_OF_LIGHT
        data = gen_relativistic(20, 100)
        m, v = data.X[:, 0], data.X[:, 1]
        np.testing.assert_allclose(data.y, c ** 4 * m ** 2 + c ** 2 * m ** 2 * v ** 2, rtol=1e-12)
        assert data.feature_names == ['m', 'v']
        assert m.max() <= 100.0 and m.min() >= 1.0

    def test_relativistic_example_row(self):
        c = SPEED_OF_LIGHT
        expected = 25 * c ** 4 + 25e16 * c ** 2
        data = gen_relativistic(10, 10)
        data.X[0] = [5.0, 1e8]
        assert data.noiseless()[0] == pytest.approx(expected, rel=1e-12)

    def test_relativistic_share_average(self):
        data = gen_relativistic(20000, 100, NoiseSpec(seed=6))
        assert np.mean(relativistic_share(data.X[:, 1])) == pytest.approx(0.204, abs=0.01)

    def test_relativistic_mass_range(self):
        assert gen_relativistic(50, 10).meta['mass_range'] == [1, 10]
        with pytest.raises(ConfigurationError):
            gen_relativistic(50, 50)

    def test_quartic(self):
        train, test = gen_quartic(n_train=30, n_test=100, noise_variance=0.0)
        assert (train.n_samples, test.n_samples) == (30, 100)
        support = train.true_support
        assert [t.display for t in support] == ['X0', 'X0^2', 'X0^3', 'X0^4']
        assert float(np.array([2.0, 4.0, 8.0, 16.0]) @ train.true_coefficients) == pytest.approx(5.6)
        np.testing.assert_allclose(train.y, train.noiseless())

    def test_kepler_tables(self):
        modern = kepler_data('modern')
        original = kepler_data('original_1619')
        assert modern.n_samples == 8
        assert original.n_samples == 6
        earth = int(np.argmin(np.abs(modern.X[:, 0] - 1.0)))
        assert modern.y[earth] == pytest.approx(365.25, abs=0.01)
        assert modern.true_coefficients[0] == KEPLER_CONSTANTS['modern']
        with pytest.raises(ConfigurationError):
            kepler_data('1609')

    def test_autoregressive_truth(self):
        data = gen_autoregressive(100, ar=(0.6,), exog_coef=2.0)
        assert data.lag == 1
        np.testing.assert_allclose(data.noiseless(), data.y[1:], rtol=1e-12)

    def test_autoregressive_must_be_stable(self):
        with pytest.raises(ConfigurationError):
            gen_autoregressive(100, ar=(0.7, 0.5))

    def test_stefan_boltzmann_noise_default(self):
        data = gen_stefan_boltzmann(200)
        assert data.meta['noise']['level'] == 2.5
        assert [t.display for t in data.true_support] == ['X0^2*X1^4']

    def test_too_few_samples(self):
        with pytest.raises(ConfigurationError):
            gen_linear5(5)

    def test_registry(self):
        assert set(GENERATORS) == {'linear5', 'multicollinear', 'relativistic', 'quartic', 'kepler',
                                   'autoregressive', 'stefan_boltzmann'}

    def test_truth_document(self):
        truth = gen_linear5(20).truth()
        assert truth['true_coefficients'] == [-2.8, -2.7, -5.3, 4.3, 9.0]
        assert truth['meta']['generator'] == 'linear5'
        assert truth['true_support'][0]['display'] == 'X0'


class TestLoadCsv:
    """Test CSV ingestion"""

    def test_last_column_is_default_target(self, write_csv):
        data = load_csv(write_csv("a,b,T\n1,2,3\n4,5,6\n"))
        assert data.feature_names == ['a', 'b']
        assert data.target_name == 'T'
        np.testing.assert_array_equal(data.X, [[1, 2], [4, 5]])
        np.testing.assert_array_equal(data.y, [3, 6])

    def test_named_target(self, write_csv):
        data = load_csv(write_csv("y,a\n1,2\n3,4\n"), target='y')
        assert data.feature_names == ['a']
        np.testing.assert_array_equal(data.y, [1, 3])

    def test_full_precision(self, write_csv):
        data = load_csv(write_csv("a,y\n0.1234567890123456789,1\n0.2,2\n"))
        assert data.X[0, 0] == 0.12345678901234568

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(str(tmp_path / "absent.csv"))

    def test_empty_file(self, write_csv):
        with pytest.raises(DataError):
            load_csv(write_csv(""))

    def test_header_only(self, write_csv):
        with pytest.raises(DataError, match="no rows"):
            load_csv(write_csv("a,y\n"))

    def test_ragged_rows(self, write_csv):
        with pytest.raises(DataError):
            load_csv(write_csv("a,y\n1,2\n3,4,5\n"))

    def test_missing_target(self, write_csv):
        with pytest.raises(DataError, match="Target column"):
            load_csv(write_csv("a,y\n1,2\n"), target='T')

    def test_non_numeric_cell(self, write_csv):
        with pytest.raises(DataError, match="non-numeric"):
            load_csv(write_csv("a,y\n1,2\nthree,4\n"))

    def test_missing_value_reports_line(self, write_csv):
        with pytest.raises(DataError, match="line 3"):
            load_csv(write_csv("a,y\n1,2\n,4\n"))

    def test_inputs_without_target(self, write_csv):
        X, y = load_inputs(write_csv("a,b\n1,2\n3,4\n"), ['a', 'b'], target='T')
        assert y is None
        np.testing.assert_array_equal(X, [[1, 2], [3, 4]])

    def test_inputs_with_target(self, write_csv):
        X, y = load_inputs(write_csv("b,a,T\n1,2,3\n"), ['a', 'b'], target='T')
        np.testing.assert_array_equal(X, [[2, 1]])
        np.testing.assert_array_equal(y, [3])

    def test_relative_path_resolves_against_backend(self, tmp_path, monkeypatch):
        (tmp_path / 'store').mkdir()
        (tmp_path / 'store' / 'data.csv').write_text("a,y\n1,2\n3,4\n")
        monkeypatch.chdir(tmp_path)
        backend = LocalStorageBackend(str(tmp_path / 'store'))
        data = load_csv('data.csv', backend=backend)
        np.testing.assert_array_equal(data.y, [2, 4])
        X, _ = load_inputs('data.csv', ['a'], backend=backend)
        np.testing.assert_array_equal(X, [[1], [3]])
        with pytest.raises(DataError, match="not found"):
            load_csv('data.csv')
