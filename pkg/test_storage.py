#!/usr/bin/env python3
"""
Test suite for artifact storage:
- Local storage backend and factory
- Model JSON, dataset CSV + sidecar and result tables
"""

import json
import os
import sys
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from basis_expansion import parse_term
from datagen import NoiseSpec, gen_linear5, load_csv
from errors import DataError
from pipeline import FittedModel, predict
from storage import (LocalStorageBackend, create_storage_backend, load_model, read_sidecar, save_model,
                     sidecar_key, write_dataset, write_json, write_table)


@pytest.fixture
def backend(tmp_path):
    return LocalStorageBackend(base_path=str(tmp_path))


@pytest.fixture
def small_model():
    return FittedModel(terms=[parse_term('X0'), parse_term('X1^2')], unscaled_beta=[1.5, -0.25],
                       intercept=0.75, hyperparameters={'degree': 2, 'lag': 0, 'cutoff': 0.01},
                       feature_names=['a', 'b'], n_inputs=2, provenance={'seed': 3})


class TestLocalStorageBackend:
    """Test the local filesystem backend"""

    def test_save_and_load(self, backend, tmp_path):
        location = backend.save_bytes(b"payload", "nested/dir/file.bin")
        assert location == os.path.join(str(tmp_path), "nested", "dir", "file.bin")
        assert backend.exists("nested/dir/file.bin")
        assert backend.load_bytes("nested/dir/file.bin") == b"payload"

    def test_missing_key(self, backend):
        assert not backend.exists("absent.json")
        with pytest.raises(DataError):
            backend.load_bytes("absent.json")

    def test_unwritable_location(self, backend):
        with patch("builtins.open", side_effect=PermissionError(13, "Permission denied")):
            with pytest.raises(DataError, match="Cannot write"):
                backend.save_bytes(b"x", "model.json")

    def test_factory_reads_output_dir(self, tmp_path):
        with patch.dict(os.environ, {'LCEN_OUTPUT_DIR': str(tmp_path)}):
            storage = create_storage_backend()
        assert isinstance(storage, LocalStorageBackend)
        assert storage.base_path == os.path.abspath(str(tmp_path))

    def test_absolute_keys_are_kept(self, backend, tmp_path):
        target = str(tmp_path / "elsewhere" / "out.txt")
        assert backend.save_bytes(b"1", target) == target


class TestArtifacts:
    """Test model, dataset and table artifacts"""

    def test_sidecar_key(self):
        assert sidecar_key("runs/data.csv") == os.path.join("runs", "data.json")

    def test_model_round_trip(self, backend, small_model):
        save_model(small_model, "model.json", backend)
        restored = load_model("model.json", backend)
        X = np.array([[1.0, 2.0], [3.0, -1.0]])
        np.testing.assert_array_equal(predict(restored, X), predict(small_model, X))
        assert restored.feature_names == ['a', 'b']
        assert restored.provenance == {'seed': 3}

    def test_model_json_is_deterministic(self, backend, small_model):
        save_model(small_model, "first.json", backend)
        save_model(small_model, "second.json", backend)
        assert backend.load_bytes("first.json") == backend.load_bytes("second.json")

    def test_not_a_model_file(self, backend):
        backend.save_bytes(b"not json", "broken.json")
        with pytest.raises(DataError):
            load_model("broken.json", backend)

    def test_dataset_with_sidecar(self, backend, tmp_path):
        data = gen_linear5(20, NoiseSpec(level=5.0, seed=1))
        written = write_dataset(data, "linear5.csv", backend)
        assert len(written) == 2
        loaded = load_csv(str(tmp_path / "linear5.csv"))
        np.testing.assert_array_equal(loaded.X, data.X)
        np.testing.assert_array_equal(loaded.y, data.y)
        truth = read_sidecar("linear5.csv", backend)
        assert truth['meta']['noise']['level'] == 5.0
        assert truth['true_coefficients'] == [-2.8, -2.7, -5.3, 4.3, 9.0]

    def test_plain_dataset_has_no_sidecar(self, backend, tmp_path):
        data = load_csv(_write(tmp_path, "a,y\n1,2\n3,4\n"))
        assert len(write_dataset(data, "copy.csv", backend)) == 1
        assert read_sidecar("copy.csv", backend) is None

    def test_malformed_sidecar(self, backend):
        backend.save_bytes(b"{", "data.json")
        with pytest.raises(DataError):
            read_sidecar("data.csv", backend)

    def test_table_is_tab_separated(self, backend):
        frame = pd.DataFrame({'cutoff': [0.01, 0.1], 'n_features': [5, 3]})
        write_table(frame, "sweep.tsv", backend)
        assert backend.load_bytes("sweep.tsv").decode() == "cutoff\tn_features\n0.01\t5\n0.1\t3\n"

    def test_json_document(self, backend):
        write_json({'b': 1, 'a': [1, 2]}, "doc.json", backend)
        assert json.loads(backend.load_bytes("doc.json")) == {'a': [1, 2], 'b': 1}


def _write(tmp_path, text):
    path = tmp_path / "input.csv"
    path.write_text(text)
    return str(path)
