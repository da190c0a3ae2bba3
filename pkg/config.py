import os
from dataclasses import dataclass, field, asdict, fields
from typing import Any, Dict, Mapping, Optional, Tuple

import numpy as np

from errors import ConfigurationError

LIBRARY_VERSION = '1.0.0'

# Load environment variables from .env file if it exists
try:
    from dotenv import load_dotenv, dotenv_values
    load_dotenv()
except ImportError:
    load_dotenv = None
    dotenv_values = None

DEFAULT_ALPHAS = (0.0,) + tuple(float(a) for a in np.logspace(-4.3, 0, 20))
DEFAULT_L1_RATIOS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.97, 0.99)
PIPELINE_NAMES = ('LCEN', 'LC', 'ENC', 'LEN', 'LCL', 'ENCEN')


class Config:
    """Base configuration"""
    THREADS = int(os.environ.get('LCEN_THREADS') or 1)
    LOG_LEVEL = os.environ.get('LCEN_LOG_LEVEL') or 'INFO'
    SEED = int(os.environ.get('LCEN_SEED') or 0)
    MAX_DEGREE = int(os.environ.get('LCEN_MAX_DEGREE') or 10)
    DEFAULT_CUTOFF = float(os.environ.get('LCEN_DEFAULT_CUTOFF') or 0.01)
    OUTPUT_DIR = os.environ.get('LCEN_OUTPUT_DIR') or '.'

    # Cross-validation defaults
    FOLDS = 5


class DevelopmentConfig(Config):
    """Development configuration"""
    LOG_LEVEL = os.environ.get('LCEN_LOG_LEVEL') or 'DEBUG'


class TestingConfig(Config):
    """Testing configuration"""
    THREADS = 1
    SEED = 0


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'default': Config
}


def get_config(env=None):
    """Return the Config class for an environment name (LCEN_ENV when omitted)"""
    env = env or os.environ.get('LCEN_ENV', 'default')
    return config.get(env, config['default'])


def resolve_threads(default=None):
    """Worker count for cross-validation; LCEN_THREADS is read at call time"""
    raw = os.environ.get('LCEN_THREADS')
    if raw:
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigurationError(f"LCEN_THREADS must be an integer, got {raw!r}")
        return max(threads, 1)
    return default or get_config().THREADS


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation"""
    seed: int = field(default_factory=lambda: get_config().SEED)
    pipeline: str = 'LCEN'
    degrees: Tuple[int, ...] = (1, 2, 3)
    lags: Tuple[int, ...] = (0,)
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    l1_ratios: Tuple[float, ...] = DEFAULT_L1_RATIOS
    cutoff: float = field(default_factory=lambda: get_config().DEFAULT_CUTOFF)
    folds: int = Config.FOLDS
    domain_guard: str = 'auto'
    families: Tuple[str, ...] = ('power', 'log_power', 'half_power', 'inverse_power', 'log_over_power')
    lag_interactions: bool = False
    threads: int = field(default_factory=resolve_threads)
    target: Optional[str] = None

    def __post_init__(self):
        if self.pipeline.upper() not in PIPELINE_NAMES:
            raise ConfigurationError(
                f"Unknown pipeline {self.pipeline!r}; expected one of {', '.join(PIPELINE_NAMES)}")
        self.pipeline = self.pipeline.upper()
        if self.domain_guard not in ('auto', 'strict'):
            raise ConfigurationError(f"domain_guard must be 'auto' or 'strict', got {self.domain_guard!r}")
        if self.folds < 2:
            raise ConfigurationError(f"folds must be >= 2, got {self.folds}")
        if self.cutoff < 0:
            raise ConfigurationError(f"cutoff must be >= 0, got {self.cutoff}")

    def as_dict(self) -> Dict[str, Any]:
        """Plain-JSON view used for provenance"""
        resolved = asdict(self)
        for key, value in resolved.items():
            if isinstance(value, tuple):
                resolved[key] = list(value)
        return resolved

    def to_grid(self):
        """Build the HyperGrid for this run"""
        from pipeline import HyperGrid
        return HyperGrid(
            alphas=self.alphas,
            l1_ratios=self.l1_ratios,
            degrees=self.degrees,
            lags=self.lags,
            cutoff=self.cutoff,
            folds=self.folds,
            families=frozenset(self.families),
            domain_guard=self.domain_guard,
            lag_interactions=self.lag_interactions,
        )


def _parse_bool(value):
    text = str(value).strip().lower()
    if text in ('true', 'on', '1', 'yes'):
        return True
    if text in ('false', 'off', '0', 'no'):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_list(value, item_type):
    if isinstance(value, (list, tuple)):
        return tuple(item_type(v) for v in value)
    parts = [p.strip() for p in str(value).split(',') if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(item_type(p) for p in parts)


_PARSERS = {
    'seed': int,
    'pipeline': str,
    'degrees': lambda v: _parse_list(v, int),
    'lags': lambda v: _parse_list(v, int),
    'alphas': lambda v: _parse_list(v, float),
    'l1_ratios': lambda v: _parse_list(v, float),
    'cutoff': float,
    'folds': int,
    'domain_guard': str,
    'families': lambda v: _parse_list(v, str),
    'lag_interactions': _parse_bool,
    'threads': int,
    'target': str,
}


def parse_settings(raw: Mapping[str, Any], source='settings') -> Dict[str, Any]:
    """Convert string key-value pairs into typed RunConfig fields

    Args:
        raw: mapping of keys (case-insensitive) to string or already-typed values
        source: label used in error messages

    Returns:
        dict: typed values keyed by RunConfig field name
    """
    parsed = {}
    for key, value in raw.items():
        name = key.strip().lower().replace('-', '_')
        if name not in _PARSERS:
            raise ConfigurationError(f"Unknown key {key!r} in {source}")
        if value is None:
            continue
        try:
            parsed[name] = _PARSERS[name](value)
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"Invalid value for {key!r} in {source}: {e}")
    return parsed


def load_run_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional key-value file and flag overrides

    Args:
        path: flat KEY=value file (dotenv syntax); None to skip
        overrides: values from command-line flags; None entries are ignored

    Returns:
        RunConfig: resolved configuration (flags win over file values)
    """
    settings = {}
    if path:
        if not os.path.exists(path):
            raise ConfigurationError(f"Config file not found: {path}")
        if dotenv_values is None:
            raise ConfigurationError("python-dotenv is required to read config files")
        settings.update(parse_settings(dotenv_values(path), source=path))
    if overrides:
        settings.update(parse_settings({k: v for k, v in overrides.items() if v is not None},
                                       source='command-line flags'))
    known = {f.name for f in fields(RunConfig)}
    return RunConfig(**{k: v for k, v in settings.items() if k in known})
