#!/usr/bin/env python3
"""
Artifact Storage
Pluggable storage backends for models, generated datasets and result tables
"""

import io
import json
import logging
import os
from abc import ABC, abstractmethod

import pandas as pd

from errors import DataError

logger = logging.getLogger(__name__)


class StorageBackend(ABC):
    """Abstract base class for artifact storage backends"""

    @abstractmethod
    def save_bytes(self, data, key):
        """Save raw bytes under a key

        Args:
            data: bytes to store
            key: storage key/path

        Returns:
            str: location the artifact was written to
        """
        pass

    @abstractmethod
    def load_bytes(self, key):
        """Load raw bytes stored under a key

        Args:
            key: storage key/path

        Returns:
            bytes: stored content
        """
        pass

    @abstractmethod
    def exists(self, key):
        """Check whether a key holds an artifact"""
        pass


class LocalStorageBackend(StorageBackend):
    """Local filesystem storage backend; relative keys resolve against base_path"""

    def __init__(self, base_path="."):
        self.base_path = os.path.abspath(base_path)
        logger.debug(f"LocalStorageBackend initialized: {self.base_path}")

    def path_for_key(self, key):
        return os.path.join(self.base_path, os.fspath(key))

    def save_bytes(self, data, key):
        file_path = self.path_for_key(key)
        try:
            directory = os.path.dirname(file_path)
            if directory:
                os.makedirs(directory, exist_ok=True)
            with open(file_path, 'wb') as f:
                f.write(data)
        except OSError as e:
            logger.error(f"Failed to write {file_path}: {str(e)}")
            raise DataError(f"Cannot write {file_path}: {e.strerror or e}")
        logger.info(f"Wrote {file_path}")
        return file_path

    def load_bytes(self, key):
        file_path = self.path_for_key(key)
        try:
            with open(file_path, 'rb') as f:
                return f.read()
        except OSError as e:
            logger.error(f"Failed to read {file_path}: {str(e)}")
            raise DataError(f"Cannot read {file_path}: {e.strerror or e}")

    def exists(self, key):
        return os.path.exists(self.path_for_key(key))


def create_storage_backend(base_path=None):
    """Factory for the storage backend

    Args:
        base_path: directory for relative keys (LCEN_OUTPUT_DIR, then the working directory)

    Returns:
        StorageBackend: configured backend instance
    """
    base_path = base_path or os.environ.get('LCEN_OUTPUT_DIR') or '.'
    return LocalStorageBackend(base_path=base_path)


def _json_bytes(document):
    return (json.dumps(document, indent=2, sort_keys=True) + '\n').encode('utf-8')


def sidecar_key(key):
    """JSON sidecar next to a data file: data.csv -> data.json"""
    stem, _ = os.path.splitext(os.fspath(key))
    return f"{stem}.json"


def save_model(model, key, backend=None):
    """Write a FittedModel as deterministic JSON"""
    backend = backend or create_storage_backend()
    return backend.save_bytes(_json_bytes(model.to_dict()), key)


def load_model(key, backend=None):
    """Read a FittedModel written by save_model"""
    from pipeline import FittedModel

    backend = backend or create_storage_backend()
    try:
        document = json.loads(backend.load_bytes(key).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{key} is not a model file: {e}")
    return FittedModel.from_dict(document)


def write_dataset(dataset, key, backend=None):
    """Write a dataset as CSV and, for generated data, its ground truth as a JSON sidecar

    Returns:
        list: locations written
    """
    backend = backend or create_storage_backend()
    buffer = io.StringIO()
    dataset.to_frame().to_csv(buffer, index=False)
    written = [backend.save_bytes(buffer.getvalue().encode('utf-8'), key)]
    if hasattr(dataset, 'truth'):
        written.append(backend.save_bytes(_json_bytes(dataset.truth()), sidecar_key(key)))
    return written


def read_sidecar(key, backend=None):
    """Ground truth written next to a generated CSV, or None when absent"""
    backend = backend or create_storage_backend()
    location = sidecar_key(key)
    if not backend.exists(location):
        return None
    try:
        return json.loads(backend.load_bytes(location).decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"Malformed sidecar {location}: {e}")


def write_table(frame: pd.DataFrame, key, backend=None):
    """Write a result table as tab-separated values"""
    backend = backend or create_storage_backend()
    buffer = io.StringIO()
    frame.to_csv(buffer, sep='\t', index=False)
    return backend.save_bytes(buffer.getvalue().encode('utf-8'), key)


def write_json(document, key, backend=None):
    backend = backend or create_storage_backend()
    return backend.save_bytes(_json_bytes(document), key)
