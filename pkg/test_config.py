#!/usr/bin/env python3
"""
Test suite for configuration handling:
- Environment-driven Config classes
- Thread-count resolution
- RunConfig validation and key-value config files
"""

import os
import sys
from unittest.mock import patch

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from config import (DEFAULT_ALPHAS, Config, DevelopmentConfig, RunConfig, TestingConfig, get_config,
                    load_run_config, parse_settings, resolve_threads)
from errors import ConfigurationError


@pytest.fixture
def config_file(tmp_path):
    """Write a flat KEY=value run configuration"""
    def _write(text):
        path = tmp_path / "run.env"
        path.write_text(text)
        return str(path)
    return _write


class TestConfigClasses:
    """Test environment configuration lookup"""

    def test_get_config_by_name(self):
        """Named environments map to their classes"""
        assert get_config('development') is DevelopmentConfig
        assert get_config('testing') is TestingConfig

    def test_get_config_unknown_falls_back_to_default(self):
        """Unknown environment names use the base Config"""
        assert get_config('production') is Config

    def test_get_config_reads_lcen_env(self):
        """LCEN_ENV selects the environment when none is passed"""
        with patch.dict(os.environ, {'LCEN_ENV': 'testing'}):
            assert get_config() is TestingConfig

    def test_default_alpha_grid_starts_with_least_squares(self):
        """The alpha grid holds 0 followed by 20 log-spaced values up to 1"""
        assert DEFAULT_ALPHAS[0] == 0.0
        assert len(DEFAULT_ALPHAS) == 21
        assert DEFAULT_ALPHAS[-1] == pytest.approx(1.0)
        assert DEFAULT_ALPHAS[1] == pytest.approx(10 ** -4.3)


class TestThreads:
    """Test the LCEN_THREADS override"""

    def test_env_override_wins(self):
        with patch.dict(os.environ, {'LCEN_THREADS': '4'}):
            assert resolve_threads(2) == 4

    def test_default_used_without_env(self):
        with patch.dict(os.environ, {}, clear=True):
            assert resolve_threads(3) == 3

    def test_invalid_env_value(self):
        with patch.dict(os.environ, {'LCEN_THREADS': 'many'}):
            with pytest.raises(ConfigurationError):
                resolve_threads()


class TestRunConfig:
    """Test RunConfig validation and resolution order"""

    def test_pipeline_name_is_normalized(self):
        assert RunConfig(pipeline='lcen', threads=1).pipeline == 'LCEN'

    def test_unknown_pipeline_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(pipeline='ridge', threads=1)

    def test_negative_cutoff_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(cutoff=-0.1, threads=1)

    def test_single_fold_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(folds=1, threads=1)

    def test_parse_settings_types_lists(self):
        """Comma-separated values become typed tuples; keys are case-insensitive"""
        parsed = parse_settings({'DEGREES': '1, 2,4', 'alphas': '0,0.1', 'lag_interactions': 'on'})
        assert parsed == {'degrees': (1, 2, 4), 'alphas': (0.0, 0.1), 'lag_interactions': True}

    def test_parse_settings_unknown_key(self):
        with pytest.raises(ConfigurationError, match="Unknown key"):
            parse_settings({'learning_rate': '0.1'})

    def test_parse_settings_bad_value(self):
        with pytest.raises(ConfigurationError, match="Invalid value"):
            parse_settings({'degrees': 'one,two'})

    def test_file_then_flags(self, config_file):
        """Flags override file values; file values override defaults"""
        path = config_file("DEGREES=1,2\nCUTOFF=0.05\nPIPELINE=LC\nSEED=7\n")
        run = load_run_config(path, {'cutoff': '0.2', 'seed': None, 'threads': 1})
        assert run.degrees == (1, 2)
        assert run.cutoff == 0.2
        assert run.pipeline == 'LC'
        assert run.seed == 7

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_run_config(str(tmp_path / "absent.env"))

    def test_as_dict_is_json_ready(self):
        """Provenance holds lists, not tuples"""
        resolved = RunConfig(threads=1, degrees=(1, 2)).as_dict()
        assert resolved['degrees'] == [1, 2]
        assert resolved['pipeline'] == 'LCEN'
        assert isinstance(resolved['families'], list)

    def test_to_grid_carries_settings(self):
        grid = RunConfig(threads=1, degrees=(2,), lags=(0, 3), cutoff=0.1, folds=4).to_grid()
        assert grid.degrees == (2,)
        assert grid.lags == (0, 3)
        assert grid.cutoff == 0.1
        assert grid.folds == 4
