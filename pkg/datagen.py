#!/usr/bin/env python3
"""
Dataset Generators
Seeded artificial datasets with known ground truth, embedded Kepler tables and CSV
ingestion for user-supplied empirical data
"""

import io
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from basis_expansion import FeatureTerm, parse_term, term_columns, terms_to_json
from errors import ConfigurationError, DataError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 2.998e8

LINEAR5_COEFFICIENTS = (-2.8, -2.7, -5.3, 4.3, 9.0)
QUARTIC_COEFFICIENTS = (1.0, 0.5, 0.1, 0.05)

# Semi-major axis (AU) and sidereal period (days), Mercury to Neptune
KEPLER_MODERN = (
    (0.38709893, 87.969),
    (0.72333199, 224.701),
    (1.00000011, 365.256),
    (1.52366231, 686.980),
    (5.20336301, 4332.589),
    (9.53707032, 10759.22),
    (19.19126393, 30685.4),
    (30.06896348, 60189.0),
)

# Kepler's 1619 relative distances (Earth = 1000) converted to AU, Mercury to Saturn
KEPLER_ORIGINAL_1619 = (
    (0.388, 87.97),
    (0.724, 224.70),
    (1.000, 365.25),
    (1.524, 686.98),
    (5.200, 4332.62),
    (9.510, 10759.5),
)

KEPLER_CONSTANTS = {'modern': 365.25, 'original_1619': 365.15}


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian noise given either as a percentage of the signal's std or as a variance"""
    level: Optional[float] = None
    variance: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.level is not None and self.variance is not None:
            raise ConfigurationError("Set exactly one of noise level and noise variance")
        if self.level is None and self.variance is None:
            object.__setattr__(self, 'level', 0.0)
        value = self.level if self.level is not None else self.variance
        if not value >= 0:
            raise ConfigurationError(f"Noise must be >= 0, got {value}")

    def sigma(self, signal) -> float:
        if self.variance is not None:
            return float(np.sqrt(self.variance))
        return self.level / 100.0 * float(np.std(signal))

    def sample(self, signal, rng=None) -> np.ndarray:
        """Draw one noise value per signal entry"""
        rng = rng if rng is not None else np.random.default_rng(self.seed)
        signal = np.asarray(signal, dtype=float)
        return self.sigma(signal) * rng.standard_normal(signal.shape)

    def to_dict(self):
        return {'level': self.level, 'variance': self.variance, 'seed': self.seed}


@dataclass
class Dataset:
    """Raw inputs, outputs and their column names"""
    X: np.ndarray
    y: np.ndarray
    feature_names: List[str] = field(default_factory=list)
    target_name: str = 'y'

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.y = np.asarray(self.y, dtype=float).ravel()
        if not self.feature_names:
            self.feature_names = [f"X{k}" for k in range(self.X.shape[1])]

    @property
    def n_samples(self):
        return len(self.y)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=self.feature_names)
        frame[self.target_name] = self.y
        return frame


@dataclass
class GeneratedDataset(Dataset):
    """Dataset with the model that generated it"""
    true_support: List[FeatureTerm] = field(default_factory=list)
    true_coefficients: np.ndarray = field(default_factory=lambda: np.zeros(0))
    true_intercept: float = 0.0
    lag: int = 0
    meta: Dict = field(default_factory=dict)

    def __post_init__(self):
        super().__post_init__()
        self.true_coefficients = np.asarray(self.true_coefficients, dtype=float)

    def noiseless(self) -> np.ndarray:
        """Evaluate the true model on X (and on lagged observed y for dynamic data)"""
        columns = term_columns(self.true_support, self.X, self.y, lag=self.lag)
        return self.true_intercept + columns @ self.true_coefficients

    def truth(self) -> Dict:
        return {
            'meta': dict(self.meta),
            'true_support': terms_to_json(self.true_support),
            'true_coefficients': [float(c) for c in self.true_coefficients],
            'true_intercept': float(self.true_intercept),
            'lag': self.lag,
            'feature_names': list(self.feature_names),
            'target_name': self.target_name,
        }


def _check_size(n, minimum=10):
    if n < minimum:
        raise ConfigurationError(f"n must be >= {minimum}, got {n}")


def gen_linear5(n=1000, noise: Optional[NoiseSpec] = None) -> GeneratedDataset:
    """y = -2.8 X0 - 2.7 X1 - 5.3 X2 + 4.3 X3 + 9.0 X4 + eps with X ~ U(1, 10)"""
    _check_size(n)
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(noise.seed)
    X = rng.uniform(1.0, 10.0, size=(n, 5))
    signal = X @ np.array(LINEAR5_COEFFICIENTS)
    y = signal + noise.sample(signal, rng)
    return GeneratedDataset(
        X=X, y=y,
        true_support=[parse_term(f"X{k}") for k in range(5)],
        true_coefficients=np.array(LINEAR5_COEFFICIENTS),
        meta={'generator': 'linear5', 'n': n, 'noise': noise.to_dict(), 'seed': noise.seed},
    )


def gen_multicollinear(n=1000, eps1: Optional[NoiseSpec] = None, eps2: Optional[NoiseSpec] = None) -> GeneratedDataset:
    """X1 = X0 + eps1 and y = 2 X0 + 2 X1 + eps2 with X0 ~ U(1, 10)

    eps1 is relative to the std of X0 and eps2 to the std of the noiseless y.
    """
    _check_size(n)
    eps1 = eps1 or NoiseSpec()
    eps2 = eps2 or NoiseSpec(seed=eps1.seed + 1)
    rng = np.random.default_rng(eps1.seed)
    x0 = rng.uniform(1.0, 10.0, size=n)
    x1 = x0 + eps1.sample(x0, rng)
    X = np.column_stack([x0, x1])
    signal = 2.0 * x0 + 2.0 * x1
    y = signal + eps2.sample(signal)
    return GeneratedDataset(
        X=X, y=y,
        true_support=[parse_term('X0'), parse_term('X1')],
        true_coefficients=np.array([2.0, 2.0]),
        meta={'generator': 'multicollinear', 'n': n, 'eps1': eps1.to_dict(), 'eps2': eps2.to_dict(),
              'seed': eps1.seed},
    )


def gen_relativistic(n=1000, mass_max=100, noise: Optional[NoiseSpec] = None) -> GeneratedDataset:
    """E^2 = c^4 m^2 + c^2 m^2 v^2 with m ~ U(1, mass_max) and v ~ U(5e7, 2.5e8)"""
    _check_size(n)
    if mass_max not in (10, 100):
        raise ConfigurationError(f"mass_max must be 10 or 100, got {mass_max}")
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(noise.seed)
    m = rng.uniform(1.0, float(mass_max), size=n)
    v = rng.uniform(5e7, 2.5e8, size=n)
    c = SPEED_OF_LIGHT
    coefficients = np.array([c ** 4, c ** 2])
    signal = coefficients[0] * m ** 2 + coefficients[1] * m ** 2 * v ** 2
    y = signal + noise.sample(signal, rng)
    return GeneratedDataset(
        X=np.column_stack([m, v]), y=y,
        feature_names=['m', 'v'], target_name='E2',
        true_support=[parse_term('X0^2'), parse_term('X0^2*X1^2')],
        true_coefficients=coefficients,
        meta={'generator': 'relativistic', 'n': n, 'mass_range': [1, mass_max], 'noise': noise.to_dict(),
              'seed': noise.seed},
    )


def relativistic_share(v) -> np.ndarray:
    """Fraction of E^2 carried by the c^2 m^2 v^2 term (independent of m)"""
    v = np.asarray(v, dtype=float)
    return v ** 2 / (SPEED_OF_LIGHT ** 2 + v ** 2)


def gen_quartic(n_train=30, n_test=1000, noise_variance=0.0, seed=0) -> Tuple[GeneratedDataset, GeneratedDataset]:
    """y = X + 0.5 X^2 + 0.1 X^3 + 0.05 X^4 + eps with X ~ N(0, 5)

    Returns:
        tuple: (train, test) sharing the ground truth; noise enters both
    """
    _check_size(n_train, minimum=2)
    _check_size(n_test, minimum=1)
    noise = NoiseSpec(variance=noise_variance, seed=seed)
    rng = np.random.default_rng(seed)
    support = [parse_term(f"X0^{d}" if d > 1 else 'X0') for d in range(1, 5)]

    def draw(n, part):
        x = rng.normal(0.0, np.sqrt(5.0), size=(n, 1))
        signal = sum(c * x[:, 0] ** (d + 1) for d, c in enumerate(QUARTIC_COEFFICIENTS))
        y = signal + noise.sample(signal, rng)
        return GeneratedDataset(
            X=x, y=y, true_support=support, true_coefficients=np.array(QUARTIC_COEFFICIENTS),
            meta={'generator': 'quartic', 'part': part, 'n': n, 'noise': noise.to_dict(), 'seed': seed},
        )

    train = draw(n_train, 'train')
    return train, draw(n_test, 'test')


def kepler_data(version='modern') -> GeneratedDataset:
    """Planetary semi-major axes a (AU) and periods T (days); truth T = k a^{3/2}"""
    tables = {'modern': KEPLER_MODERN, 'original_1619': KEPLER_ORIGINAL_1619}
    if version not in tables:
        raise ConfigurationError(f"Unknown Kepler table {version!r}; expected one of {', '.join(tables)}")
    table = np.array(tables[version])
    return GeneratedDataset(
        X=table[:, :1], y=table[:, 1],
        feature_names=['a'], target_name='T',
        true_support=[parse_term('X0^1.5')],
        true_coefficients=np.array([KEPLER_CONSTANTS[version]]),
        meta={'generator': 'kepler', 'version': version, 'n': len(table)},
    )


def gen_autoregressive(n=300, ar=(0.5, 0.3), exog_coef=1.0, noise: Optional[NoiseSpec] = None) -> GeneratedDataset:
    """y_t = sum_i ar_i y_{t-i} + exog_coef x_t + eps_t with x ~ U(1, 10)

    The noise level is relative to the std of the noiseless series and enters the
    recursion as an innovation.
    """
    _check_size(n)
    ar = tuple(float(a) for a in ar)
    if not ar:
        raise ConfigurationError("ar needs at least one coefficient")
    if sum(abs(a) for a in ar) >= 1.0:
        raise ConfigurationError(f"ar coefficients {ar} do not give a stable series")
    noise = noise or NoiseSpec()
    rng = np.random.default_rng(noise.seed)
    x = rng.uniform(1.0, 10.0, size=n)
    p = len(ar)

    def simulate(innovations):
        y = np.empty(n)
        y[:p] = exog_coef * x[:p] / (1.0 - sum(ar))
        for t in range(p, n):
            y[t] = sum(a * y[t - i - 1] for i, a in enumerate(ar)) + exog_coef * x[t] + innovations[t]
        return y

    clean = simulate(np.zeros(n))
    y = simulate(noise.sample(clean, rng)) if noise.sigma(clean) > 0 else clean
    support = [parse_term('X0')] + [parse_term(f"y[t-{i}]") for i in range(1, p + 1)]
    return GeneratedDataset(
        X=x.reshape(-1, 1), y=y,
        true_support=support,
        true_coefficients=np.array((exog_coef,) + ar),
        lag=p,
        meta={'generator': 'autoregressive', 'n': n, 'ar': list(ar), 'exog_coef': exog_coef,
              'noise': noise.to_dict(), 'seed': noise.seed},
    )


def gen_stefan_boltzmann(n=300, noise: Optional[NoiseSpec] = None) -> GeneratedDataset:
    """Normalized luminosity L = R^2 T^4 (solar units) with R ~ U(0.1, 0.7), T ~ U(0.45, 0.7)"""
    _check_size(n)
    noise = noise or NoiseSpec(level=2.5)
    rng = np.random.default_rng(noise.seed)
    R = rng.uniform(0.1, 0.7, size=n)
    T = rng.uniform(0.45, 0.7, size=n)
    signal = R ** 2 * T ** 4
    y = signal + noise.sample(signal, rng)
    return GeneratedDataset(
        X=np.column_stack([R, T]), y=y,
        feature_names=['R', 'T'], target_name='L',
        true_support=[parse_term('X0^2*X1^4')],
        true_coefficients=np.array([1.0]),
        meta={'generator': 'stefan_boltzmann', 'n': n, 'noise': noise.to_dict(), 'seed': noise.seed},
    )


def _read_frame(path, backend=None) -> pd.DataFrame:
    found = backend.exists(path) if backend is not None else os.path.exists(path)
    if not found:
        raise DataError(f"Data file not found: {path}")
    source = io.BytesIO(backend.load_bytes(path)) if backend is not None else path
    try:
        frame = pd.read_csv(source, float_precision='round_trip')
    except pd.errors.EmptyDataError:
        raise DataError(f"{path} is empty")
    except pd.errors.ParserError as e:
        raise DataError(f"{path} is not a rectangular CSV: {e}")
    if frame.empty:
        raise DataError(f"{path} has a header but no rows")
    frame.columns = [str(c) for c in frame.columns]
    return frame


def _numeric(frame, columns, path) -> np.ndarray:
    for column in columns:
        if column not in frame.columns:
            raise DataError(f"Column {column!r} not found in {path}")
        if not pd.api.types.is_numeric_dtype(frame[column]):
            raise DataError(f"Column {column!r} in {path} contains non-numeric cells")
        if frame[column].isna().any():
            line = int(frame[column].isna().to_numpy().argmax()) + 2
            raise DataError(f"Column {column!r} in {path} has a missing value on line {line}")
    return frame[list(columns)].to_numpy(dtype=float)


def load_csv(path, target=None, features=None, backend=None) -> Dataset:
    """Read a rectangular numeric CSV with a header row

    Args:
        path: CSV file
        target: name of the output column (defaults to the last column)
        features: input columns to keep (defaults to every other column, in file order)
        backend: storage backend to read through (plain filesystem path when omitted)

    Returns:
        Dataset: rows in file order

    Raises:
        DataError: missing file, empty file, ragged rows, missing columns, non-numeric cells
    """
    frame = _read_frame(path, backend)
    columns = list(frame.columns)
    target = target or columns[-1]
    if target not in columns:
        raise DataError(f"Target column {target!r} not found in {path}")
    features = list(features) if features is not None else [c for c in columns if c != target]
    X = _numeric(frame, features, path)
    y = _numeric(frame, [target], path)[:, 0]
    logger.info(f"Loaded {len(frame)} rows, {len(features)} features from {path}")
    return Dataset(X=X, y=y, feature_names=features, target_name=target)


def load_inputs(path, features, target=None, backend=None) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Read model inputs, plus the target column when the file has it

    Returns:
        tuple: (X, y or None)
    """
    frame = _read_frame(path, backend)
    X = _numeric(frame, list(features), path)
    y = None
    if target is not None and target in frame.columns:
        y = _numeric(frame, [target], path)[:, 0]
    return X, y


GENERATORS = {
    'linear5': gen_linear5,
    'multicollinear': gen_multicollinear,
    'relativistic': gen_relativistic,
    'quartic': gen_quartic,
    'kepler': kepler_data,
    'autoregressive': gen_autoregressive,
    'stefan_boltzmann': gen_stefan_boltzmann,
}
