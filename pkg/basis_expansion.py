#!/usr/bin/env python3
"""
Basis Expansion for Sparse Nonlinear Regression
Expands raw inputs (and lagged inputs/outputs for dynamic models) into polynomial,
logarithmic, half-integer power, inverse power and log-over-power features, with
symbolic term descriptors and column standardization
"""

import itertools
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import get_config
from errors import ConfigurationError, DataError, DimensionMismatchError, DomainViolationError

logger = logging.getLogger(__name__)

OUTPUT_ID = -1

POWER = 'power'
LOG_POWER = 'log_power'
HALF_POWER = 'half_power'
INVERSE_POWER = 'inverse_power'
LOG_OVER_POWER = 'log_over_power'

# Row order of the expansion table; also the canonical enumeration order inside a degree
FAMILIES = (POWER, LOG_POWER, HALF_POWER, INVERSE_POWER, LOG_OVER_POWER)
POSITIVE_FAMILIES = frozenset({LOG_POWER, HALF_POWER, INVERSE_POWER, LOG_OVER_POWER})


@dataclass(frozen=True, order=True)
class Factor:
    """One transformed variable inside a product term

    ``a`` is the log exponent and ``b`` the power exponent; for half powers ``b = d``
    encodes the exponent (2d - 1) / 2.
    """
    variable: int
    lag: int = 0
    transform: str = POWER
    a: int = 0
    b: int = 1

    def __post_init__(self):
        if self.transform not in FAMILIES:
            raise ConfigurationError(f"Unknown transform family: {self.transform}")
        if self.lag < 0 or self.a < 0 or self.b < 0:
            raise ConfigurationError("Factor lag and exponents must be non-negative")
        if self.variable == OUTPUT_ID and self.lag < 1:
            raise ConfigurationError("The output can only enter a term through a lag >= 1")

    @property
    def degree(self):
        if self.transform == LOG_POWER:
            return self.a
        if self.transform == LOG_OVER_POWER:
            return self.a + self.b
        return self.b

    def variable_name(self, names=None):
        if self.variable == OUTPUT_ID:
            return f"y[t-{self.lag}]"
        base = names[self.variable] if names else f"X{self.variable}"
        return f"{base}[t-{self.lag}]" if self.lag else base

    def render(self, names=None):
        name = self.variable_name(names)
        if self.transform == POWER:
            return name if self.b == 1 else f"{name}^{self.b}"
        if self.transform == LOG_POWER:
            return f"ln({name})" if self.a == 1 else f"ln({name})^{self.a}"
        if self.transform == HALF_POWER:
            return f"{name}^{(2 * self.b - 1) / 2:g}"
        if self.transform == INVERSE_POWER:
            return f"1/{name}" if self.b == 1 else f"1/{name}^{self.b}"
        numerator = f"ln({name})" if self.a == 1 else f"ln({name})^{self.a}"
        denominator = name if self.b == 1 else f"{name}^{self.b}"
        return f"{numerator}/{denominator}"

    def to_dict(self):
        return {'variable': self.variable, 'lag': self.lag, 'transform': self.transform,
                'a': self.a, 'b': self.b}


@dataclass(frozen=True)
class FeatureTerm:
    """Product of transformed-variable factors; the empty product is the intercept"""
    factors: Tuple[Factor, ...] = ()

    def __post_init__(self):
        ordered = tuple(sorted(self.factors, key=lambda f: (f.variable, f.lag)))
        keys = [(f.variable, f.lag) for f in ordered]
        if len(set(keys)) != len(keys):
            raise ConfigurationError("A term cannot hold two factors of the same (variable, lag)")
        object.__setattr__(self, 'factors', ordered)
        if ordered and term_degree(self) < 1:
            raise ConfigurationError("Non-intercept terms must have degree >= 1")

    @property
    def is_intercept(self):
        return not self.factors

    @property
    def degree(self):
        return term_degree(self)

    @property
    def max_lag(self):
        return max((f.lag for f in self.factors), default=0)

    @property
    def display(self):
        return self.render()

    def render(self, names=None):
        if not self.factors:
            return '1'
        return '*'.join(f.render(names) for f in self.factors)

    def to_dict(self):
        return {'display': self.display, 'factors': [f.to_dict() for f in self.factors]}

    def __str__(self):
        return self.display


INTERCEPT = FeatureTerm()


def term_degree(term: FeatureTerm) -> int:
    """Effective degree of a term (X^{3/2} counts 2, ln(X)^2/X counts 3)"""
    return sum(f.degree for f in term.factors)


# display grammar: factors joined by '*', variables X<k>, X<k>[t-<l>] or y[t-<l>]
_VAR = r"(?:X\d+(?:\[t-\d+\])?|y\[t-\d+\])"
_FACTOR_PATTERNS = [
    (LOG_OVER_POWER, re.compile(rf"^ln\(({_VAR})\)(?:\^(\d+))?/({_VAR})(?:\^(\d+))?$")),
    (INVERSE_POWER, re.compile(rf"^1/({_VAR})(?:\^(\d+))?$")),
    (LOG_POWER, re.compile(rf"^ln\(({_VAR})\)(?:\^(\d+))?$")),
    (HALF_POWER, re.compile(rf"^({_VAR})\^(\d+\.5)$")),
    (POWER, re.compile(rf"^({_VAR})(?:\^(\d+))?$")),
]
_VAR_PARTS = re.compile(r"^(?:X(\d+)(?:\[t-(\d+)\])?|y\[t-(\d+)\])$")


def _parse_variable(text):
    match = _VAR_PARTS.match(text)
    if match.group(3) is not None:
        return OUTPUT_ID, int(match.group(3))
    return int(match.group(1)), int(match.group(2) or 0)


def _parse_factor(text):
    for family, pattern in _FACTOR_PATTERNS:
        match = pattern.match(text)
        if not match:
            continue
        variable, lag = _parse_variable(match.group(1))
        if family == LOG_OVER_POWER:
            if _parse_variable(match.group(3)) != (variable, lag):
                break
            return Factor(variable, lag, family, a=int(match.group(2) or 1), b=int(match.group(4) or 1))
        if family == LOG_POWER:
            return Factor(variable, lag, family, a=int(match.group(2) or 1), b=0)
        if family == HALF_POWER:
            return Factor(variable, lag, family, a=0, b=int((float(match.group(2)) + 0.5)))
        return Factor(variable, lag, family, a=0, b=int(match.group(2) or 1))
    raise ConfigurationError(f"Cannot parse term factor: {text!r}")


def parse_term(display: str) -> FeatureTerm:
    """Parse a canonical display string back into a FeatureTerm"""
    text = display.strip()
    if text == '1':
        return INTERCEPT
    # '*' never appears inside a factor, '/' only inside one
    return FeatureTerm(tuple(_parse_factor(part) for part in text.split('*')))


def terms_to_json(terms: Sequence[FeatureTerm]) -> List[dict]:
    return [t.to_dict() for t in terms]


def terms_from_json(items: Sequence[dict]) -> List[FeatureTerm]:
    terms = []
    for item in items:
        factors = tuple(Factor(**f) for f in item.get('factors', []))
        term = FeatureTerm(factors)
        if 'display' in item and item['display'] != term.display:
            raise DataError(f"Term display {item['display']!r} does not match its factors ({term.display!r})")
        terms.append(term)
    return terms


@dataclass(frozen=True)
class ExpansionConfig:
    """Settings for the basis expansion"""
    degree: int = 1
    lag: int = 0
    families: frozenset = frozenset(FAMILIES)
    domain_guard: str = 'auto'
    lag_interactions: bool = False
    max_degree: int = field(default_factory=lambda: get_config().MAX_DEGREE)

    def __post_init__(self):
        if self.degree < 1:
            raise ConfigurationError(f"degree must be >= 1, got {self.degree}")
        if self.degree > self.max_degree:
            raise ConfigurationError(f"degree {self.degree} exceeds the guardrail of {self.max_degree}")
        if self.lag < 0:
            raise ConfigurationError(f"lag must be >= 0, got {self.lag}")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ConfigurationError(f"Unknown transform families: {sorted(unknown)}")
        if self.domain_guard not in ('auto', 'strict'):
            raise ConfigurationError(f"domain_guard must be 'auto' or 'strict', got {self.domain_guard!r}")
        object.__setattr__(self, 'families', frozenset(self.families))


@dataclass
class ScalingInfo:
    """Column statistics needed to move between standardized and original units"""
    mean: np.ndarray
    std: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0
    dropped_constant_columns: List[int] = field(default_factory=list)

    def subset(self, columns):
        columns = np.asarray(columns, dtype=int)
        return ScalingInfo(self.mean[columns].copy(), self.std[columns].copy(),
                           self.y_mean, self.y_std, list(self.dropped_constant_columns))

    def to_dict(self):
        return {'mean': self.mean.tolist(), 'std': self.std.tolist(), 'y_mean': float(self.y_mean),
                'y_std': float(self.y_std), 'dropped_constant_columns': list(self.dropped_constant_columns)}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data['mean'], dtype=float), np.asarray(data['std'], dtype=float),
                   float(data['y_mean']), float(data['y_std']), list(data.get('dropped_constant_columns', [])))


@dataclass
class DesignMatrix:
    """Expanded matrix: column 0 is the intercept (ones), the rest are standardized"""
    values: np.ndarray
    terms: List[FeatureTerm]
    scaling: ScalingInfo
    raw: np.ndarray
    target: Optional[np.ndarray] = None
    config: ExpansionConfig = field(default_factory=ExpansionConfig)
    n_inputs: int = 0
    skipped_by_domain: List[int] = field(default_factory=list)

    @property
    def features(self):
        return self.values[:, 1:]

    @property
    def feature_terms(self):
        return self.terms[1:]

    @property
    def raw_features(self):
        return self.raw[:, 1:]

    @property
    def scaled_target(self):
        if self.target is None:
            return None
        return (self.target - self.scaling.y_mean) / self.scaling.y_std

    @property
    def shape(self):
        return self.values.shape


def _variable_universe(m, config):
    """(variable, lag) pairs: raw inputs by index with lags ascending, then lagged outputs"""
    universe = []
    for k in range(m):
        for lag in range(config.lag + 1):
            universe.append((k, lag))
    for lag in range(1, config.lag + 1):
        universe.append((OUTPUT_ID, lag))
    return universe


def _single_factor_term(family, variable, lag, degree):
    if family == LOG_POWER:
        return FeatureTerm((Factor(variable, lag, LOG_POWER, a=degree, b=0),))
    return FeatureTerm((Factor(variable, lag, family, a=0, b=degree),))


def enumerate_terms(m: int, config: ExpansionConfig) -> List[FeatureTerm]:
    """List every candidate term in canonical order

    Terms are grouped by degree (so the list for degree D - 1 is a prefix of the list
    for degree D); inside a degree the families follow FAMILIES, variables ascend by
    index and lags ascend.

    Args:
        m: number of raw input features (0 allowed only for purely autoregressive data)
        config: expansion settings

    Returns:
        list: FeatureTerm objects, starting with the intercept
    """
    if m < 0 or (m == 0 and config.lag == 0):
        raise ConfigurationError(f"At least one input feature is required, got m={m}")
    universe = _variable_universe(m, config)
    if config.lag_interactions:
        full = universe
    else:
        full = [(v, lag) for v, lag in universe if lag == 0]
    families = config.families

    terms = [INTERCEPT]
    for degree in range(1, config.degree + 1):
        variables = universe if degree == 1 else full
        if POWER in families:
            for combo in itertools.combinations_with_replacement(variables, degree):
                counts = {}
                for key in combo:
                    counts[key] = counts.get(key, 0) + 1
                terms.append(FeatureTerm(tuple(Factor(v, lag, POWER, a=0, b=c) for (v, lag), c in counts.items())))
        for family in (LOG_POWER, HALF_POWER, INVERSE_POWER):
            if family not in families:
                continue
            for v, lag in variables:
                terms.append(_single_factor_term(family, v, lag, degree))
        if LOG_OVER_POWER in families and degree >= 2:
            for v, lag in variables:
                for a in range(degree - 1, 0, -1):
                    terms.append(FeatureTerm((Factor(v, lag, LOG_OVER_POWER, a=a, b=degree - a),)))
    return terms


def _factor_values(factor, column):
    with np.errstate(all='ignore'):
        if factor.transform == POWER:
            return np.power(column, factor.b)
        if factor.transform == LOG_POWER:
            return np.power(np.log(column), factor.a)
        if factor.transform == HALF_POWER:
            return np.power(column, (2 * factor.b - 1) / 2.0)
        if factor.transform == INVERSE_POWER:
            return 1.0 / np.power(column, factor.b)
        return np.power(np.log(column), factor.a) / np.power(column, factor.b)


def _lagged_columns(X, y, lag):
    """Map (variable, lag) to the column aligned with rows lag..n-1 of the series"""
    n = X.shape[0]
    columns = {}
    for k in range(X.shape[1]):
        for l in range(lag + 1):
            columns[(k, l)] = X[lag - l:n - l, k]
    if y is not None:
        for l in range(1, lag + 1):
            columns[(OUTPUT_ID, l)] = y[lag - l:n - l]
    return columns


def _evaluate(terms, columns, rows, strict_domain=True):
    out = np.empty((rows, len(terms)))
    for j, term in enumerate(terms):
        value = np.ones(rows)
        for factor in term.factors:
            key = (factor.variable, factor.lag)
            if key not in columns:
                raise DataError(f"Term {term.display} needs {factor.variable_name()}, which is not available")
            column = columns[key]
            if strict_domain and factor.transform in POSITIVE_FAMILIES and np.any(column <= 0):
                raise DomainViolationError(
                    f"Term {term.display} requires positive values of {factor.variable_name()}")
            value = value * _factor_values(factor, column)
        out[:, j] = value
    return out


def _as_matrix(X, allow_empty=False):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise DimensionMismatchError(f"X must be a 2-D matrix, got shape {X.shape}")
    if not allow_empty and X.shape[1] == 0:
        raise DimensionMismatchError("X has no columns")
    return X


def term_columns(terms: Sequence[FeatureTerm], X, y=None, lag=0) -> np.ndarray:
    """Evaluate terms on a whole series without standardization

    Args:
        terms: terms to evaluate
        X: n x m raw inputs (may have zero columns when lag > 0)
        y: length-n outputs, required when any term uses a lagged output
        lag: rows 0..lag-1 are consumed as history

    Returns:
        np.ndarray: (n - lag) x len(terms) matrix

    Raises:
        DomainViolationError: a positive-only transform met a value <= 0
    """
    X = _as_matrix(X, allow_empty=True)
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != X.shape[0]:
            raise DimensionMismatchError(f"X has {X.shape[0]} rows but y has {len(y)}")
    if X.shape[0] - lag < 1:
        raise DataError(f"{X.shape[0]} rows cannot supply a history of {lag} steps")
    columns = _lagged_columns(X, y, lag)
    return _evaluate(terms, columns, X.shape[0] - lag)


def evaluate_terms(model_terms: Sequence[FeatureTerm], X_row, history_X=None, history_y=None) -> np.ndarray:
    """Evaluate terms on a single time step

    Args:
        model_terms: terms to evaluate
        X_row: raw inputs at the current step
        history_X: past inputs, oldest first (most recent row last)
        history_y: past outputs, oldest first

    Returns:
        np.ndarray: feature vector aligned with model_terms
    """
    X_row = np.atleast_1d(np.asarray(X_row, dtype=float))
    depth = max((t.max_lag for t in model_terms), default=0)
    columns = {(k, 0): X_row[k:k + 1] for k in range(len(X_row))}
    if depth:
        past_X = np.zeros((0, len(X_row))) if history_X is None else _as_matrix(history_X, allow_empty=True)
        past_y = np.zeros(0) if history_y is None else np.asarray(history_y, dtype=float).ravel()
        for lag in range(1, depth + 1):
            if past_X.shape[0] >= lag:
                for k in range(past_X.shape[1]):
                    columns[(k, lag)] = past_X[-lag, k:k + 1]
            if len(past_y) >= lag:
                columns[(OUTPUT_ID, lag)] = past_y[-lag:len(past_y) - lag + 1]
    return _evaluate(model_terms, columns, 1)[0]


def standardize(raw):
    """Column means and population standard deviations; constant columns get std 0"""
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)
    constant = (std == 0) | (std <= 1e-12 * np.abs(mean))
    return mean, np.where(constant, 0.0, std), constant


def expand(X, y=None, config: Optional[ExpansionConfig] = None) -> DesignMatrix:
    """Expand raw inputs into a standardized design matrix

    Args:
        X: n x m raw inputs
        y: length-n outputs (required when config.lag > 0)
        config: expansion settings (defaults to degree 1, lag 0)

    Returns:
        DesignMatrix: intercept column plus standardized non-constant columns

    Raises:
        DomainViolationError: strict domain guard and a positive-only family meets values <= 0
        DataError: non-finite inputs or fewer than 2 usable rows
    """
    config = config or ExpansionConfig()
    X = _as_matrix(X, allow_empty=config.lag > 0)
    n, m = X.shape
    if not np.all(np.isfinite(X)):
        raise DataError("X contains non-finite values")
    if y is not None:
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != n:
            raise DimensionMismatchError(f"X has {n} rows but y has {len(y)}")
        if not np.all(np.isfinite(y)):
            raise DataError("y contains non-finite values")
    elif config.lag > 0:
        raise DataError("y is required when lag > 0")
    if config.lag >= n or n - config.lag < 2:
        raise DataError(f"{n} rows leave fewer than 2 usable rows at lag {config.lag}")

    columns = _lagged_columns(X, y, config.lag)
    rows = n - config.lag
    candidates = enumerate_terms(m, config)

    non_positive = {key for key, col in columns.items() if np.any(col <= 0)}
    kept, skipped = [], []
    for index, term in enumerate(candidates):
        bad = [f for f in term.factors
               if f.transform in POSITIVE_FAMILIES and (f.variable, f.lag) in non_positive]
        if bad:
            if config.domain_guard == 'strict':
                raise DomainViolationError(
                    f"Term {term.display} requires positive values of {bad[0].variable_name()}")
            skipped.append(index)
            continue
        kept.append(index)
    if skipped:
        logger.info(f"Domain guard skipped {len(skipped)} terms on non-positive variables")

    raw = _evaluate([candidates[i] for i in kept], columns, rows, strict_domain=False)
    finite = np.all(np.isfinite(raw), axis=0)
    if not np.all(finite):
        bad_terms = [candidates[kept[j]].display for j in np.flatnonzero(~finite)]
        if config.domain_guard == 'strict':
            raise DomainViolationError(f"Non-finite values in terms: {', '.join(bad_terms)}")
        logger.warning(f"Dropping {len(bad_terms)} terms with non-finite values: {', '.join(bad_terms[:5])}")
        kept = [i for i, ok in zip(kept, finite) if ok]
        raw = raw[:, finite]

    mean, std, constant = standardize(raw[:, 1:])
    dropped = [kept[j + 1] for j in np.flatnonzero(constant)]
    retained = np.concatenate([[True], ~constant])
    kept = [i for i, keep in zip(kept, retained) if keep]
    raw = raw[:, retained]
    mean, std = mean[~constant], std[~constant]

    values = raw.copy()
    values[:, 1:] = (raw[:, 1:] - mean) / std

    target = None
    y_mean, y_std = 0.0, 1.0
    if y is not None:
        target = y[config.lag:].copy()
        y_mean = float(target.mean())
        y_std = float(target.std()) or 1.0

    scaling = ScalingInfo(mean, std, y_mean, y_std, dropped)
    logger.debug(f"Expanded {m} inputs to {len(kept)} terms (degree={config.degree}, lag={config.lag})")
    return DesignMatrix(values=values, terms=[candidates[i] for i in kept], scaling=scaling, raw=raw,
                        target=target, config=config, n_inputs=m, skipped_by_domain=skipped)
