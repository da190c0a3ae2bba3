#!/usr/bin/env python3
"""
LCEN Pipeline
Cross-validated LASSO -> Clip -> Elastic Net -> Clip model building, the ablated and
variant pipelines assembled from the same steps, prediction, recursive forecasting and
model diagnostics
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.linear_model import LinearRegression
from sklearn.metrics import mean_squared_error, r2_score
from sklearn.model_selection import KFold

from basis_expansion import (FAMILIES, ExpansionConfig, FeatureTerm, ScalingInfo, evaluate_terms, expand,
                             standardize, term_columns, terms_from_json, terms_to_json)
from config import DEFAULT_ALPHAS, DEFAULT_L1_RATIOS, LIBRARY_VERSION, get_config, resolve_threads
from enet_core import Coefficients, EnetConfig, fit_enet, prepare_gram, solve_enet, unscale
from errors import ConfigurationError, CVSearchError, DataError, DimensionMismatchError

logger = logging.getLogger(__name__)

LASSO = 'lasso'
ENET = 'enet'
NONE = 'none'


@dataclass(frozen=True)
class HyperGrid:
    """Cross-validation search space plus the clip cutoff"""
    alphas: Tuple[float, ...] = DEFAULT_ALPHAS
    l1_ratios: Tuple[float, ...] = DEFAULT_L1_RATIOS
    degrees: Tuple[int, ...] = (1, 2, 3)
    lags: Tuple[int, ...] = (0,)
    cutoff: float = field(default_factory=lambda: get_config().DEFAULT_CUTOFF)
    folds: int = field(default_factory=lambda: get_config().FOLDS)
    families: frozenset = frozenset(FAMILIES)
    domain_guard: str = 'auto'
    lag_interactions: bool = False
    tol: float = 1e-6
    max_iter: int = 10_000

    def __post_init__(self):
        for name in ('alphas', 'l1_ratios', 'degrees', 'lags'):
            values = tuple(getattr(self, name))
            if not values:
                raise ConfigurationError(f"{name} must not be empty")
            object.__setattr__(self, name, values)
        if any(not a >= 0 for a in self.alphas):
            raise ConfigurationError(f"alphas must be >= 0, got {self.alphas}")
        if any(not 0 <= r <= 1 for r in self.l1_ratios):
            raise ConfigurationError(f"l1_ratios must lie in [0, 1], got {self.l1_ratios}")
        if any(d < 1 for d in self.degrees):
            raise ConfigurationError(f"degrees must be >= 1, got {self.degrees}")
        if any(lag < 0 for lag in self.lags):
            raise ConfigurationError(f"lags must be >= 0, got {self.lags}")
        if not self.cutoff >= 0:
            raise ConfigurationError(f"cutoff must be >= 0, got {self.cutoff}")
        if self.folds < 2:
            raise ConfigurationError(f"folds must be >= 2, got {self.folds}")
        object.__setattr__(self, 'families', frozenset(self.families))

    def expansion_config(self, degree, lag):
        return ExpansionConfig(degree=degree, lag=lag, families=self.families,
                               domain_guard=self.domain_guard, lag_interactions=self.lag_interactions)

    def with_cutoff(self, cutoff):
        return replace(self, cutoff=cutoff)


@dataclass(frozen=True)
class PipelineSpec:
    """Ordered step list: first fit, optional clip, optional second fit, optional clip"""
    name: str
    first_stage: str
    clip_after_first: bool
    second_stage: str = NONE
    clip_after_second: bool = False

    def __post_init__(self):
        if self.first_stage not in (LASSO, ENET):
            raise ConfigurationError(f"first_stage must be lasso or enet, got {self.first_stage!r}")
        if self.second_stage not in (LASSO, ENET, NONE):
            raise ConfigurationError(f"second_stage must be lasso, enet or none, got {self.second_stage!r}")
        if self.second_stage == NONE and self.clip_after_second:
            raise ConfigurationError("A second clip needs a second stage")


PIPELINES = {
    'LCEN': PipelineSpec('LCEN', LASSO, True, ENET, True),
    'LC': PipelineSpec('LC', LASSO, True),
    'ENC': PipelineSpec('ENC', ENET, True),
    'LEN': PipelineSpec('LEN', LASSO, False, ENET, False),
    'LCL': PipelineSpec('LCL', LASSO, True, LASSO, True),
    'ENCEN': PipelineSpec('ENCEN', ENET, True, ENET, True),
}


def pipeline_spec(name) -> PipelineSpec:
    """Look up one of the named pipelines (case-insensitive)"""
    if isinstance(name, PipelineSpec):
        return name
    try:
        return PIPELINES[str(name).upper()]
    except KeyError:
        raise ConfigurationError(f"Unknown pipeline {name!r}; expected one of {', '.join(PIPELINES)}")


@dataclass(frozen=True)
class CVRecord:
    """Mean validation MSE of one hyperparameter combination (None when it failed)"""
    alpha: float
    l1_ratio: float
    degree: int
    lag: int
    mse: Optional[float]

    @property
    def failed(self):
        return self.mse is None

    def to_dict(self):
        return asdict(self)


@dataclass
class CVResult:
    """Full cross-validation table with the chosen combination"""
    records: List[CVRecord]
    chosen: CVRecord
    seed: int = 0
    folds: int = 5

    @property
    def best_mse(self):
        return min(r.mse for r in self.records if r.mse is not None)

    def as_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.records],
                            columns=['alpha', 'l1_ratio', 'degree', 'lag', 'mse'])

    def to_dict(self):
        return {'seed': self.seed, 'folds': self.folds,
                'chosen': self.chosen.to_dict(), 'records': [r.to_dict() for r in self.records]}

    @classmethod
    def from_dict(cls, data):
        records = [CVRecord(**r) for r in data['records']]
        return cls(records=records, chosen=CVRecord(**data['chosen']), seed=data.get('seed', 0),
                   folds=data.get('folds', 5))


@dataclass
class History:
    """Observed past of a series, oldest row first"""
    X: Optional[np.ndarray]
    y: np.ndarray

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float).ravel()
        if self.X is not None:
            X = np.asarray(self.X, dtype=float)
            self.X = X.reshape(-1, 1) if X.ndim == 1 else X
            if self.X.shape[0] != len(self.y):
                raise DimensionMismatchError(
                    f"History has {self.X.shape[0]} input rows but {len(self.y)} outputs")

    def __len__(self):
        return len(self.y)


@dataclass
class FittedModel:
    """Surviving terms with their coefficients and the provenance of how they were chosen"""
    terms: List[FeatureTerm]
    unscaled_beta: np.ndarray
    intercept: float
    scaled_beta: Optional[np.ndarray] = None
    scaled_intercept: float = 0.0
    scaling: Optional[ScalingInfo] = None
    hyperparameters: Dict = field(default_factory=dict)
    cv_table: Dict[str, CVResult] = field(default_factory=dict)
    pipeline: str = 'LCEN'
    seed: int = 0
    degenerate: bool = False
    feature_names: Optional[List[str]] = None
    n_inputs: int = 0
    train_metrics: Dict = field(default_factory=dict)
    provenance: Dict = field(default_factory=dict)
    library_version: str = LIBRARY_VERSION

    def __post_init__(self):
        self.terms = list(self.terms)
        self.unscaled_beta = np.asarray(self.unscaled_beta, dtype=float).ravel()
        if self.scaled_beta is None:
            self.scaled_beta = np.full(len(self.terms), np.nan)
        self.scaled_beta = np.asarray(self.scaled_beta, dtype=float).ravel()
        if len(self.unscaled_beta) != len(self.terms) or len(self.scaled_beta) != len(self.terms):
            raise DimensionMismatchError(
                f"{len(self.terms)} terms but {len(self.unscaled_beta)} coefficients")

    @property
    def n_features_selected(self):
        return len(self.terms)

    @property
    def degree(self):
        return int(self.hyperparameters.get('degree', max((t.degree for t in self.terms), default=1)))

    @property
    def lag(self):
        return int(self.hyperparameters.get('lag', max((t.max_lag for t in self.terms), default=0)))

    @property
    def cutoff(self):
        return float(self.hyperparameters.get('cutoff', 0.0))

    def to_dict(self):
        return {
            'library_version': self.library_version,
            'pipeline': self.pipeline,
            'seed': self.seed,
            'degenerate': self.degenerate,
            'terms': terms_to_json(self.terms),
            'unscaled_beta': [float(b) for b in self.unscaled_beta],
            'intercept': float(self.intercept),
            'scaled_beta': [float(b) for b in self.scaled_beta],
            'scaled_intercept': float(self.scaled_intercept),
            'scaling': self.scaling.to_dict() if self.scaling is not None else None,
            'hyperparameters': dict(self.hyperparameters),
            'cv_table': {stage: result.to_dict() for stage, result in self.cv_table.items()},
            'feature_names': list(self.feature_names) if self.feature_names else None,
            'n_inputs': self.n_inputs,
            'train_metrics': dict(self.train_metrics),
            'provenance': dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data):
        try:
            scaling = data.get('scaling')
            return cls(
                terms=terms_from_json(data['terms']),
                unscaled_beta=np.asarray(data['unscaled_beta'], dtype=float),
                intercept=float(data['intercept']),
                scaled_beta=np.asarray(data.get('scaled_beta') or [np.nan] * len(data['terms']), dtype=float),
                scaled_intercept=float(data.get('scaled_intercept', 0.0)),
                scaling=ScalingInfo.from_dict(scaling) if scaling else None,
                hyperparameters=dict(data.get('hyperparameters', {})),
                cv_table={k: CVResult.from_dict(v) for k, v in (data.get('cv_table') or {}).items()},
                pipeline=data.get('pipeline', 'LCEN'),
                seed=int(data.get('seed', 0)),
                degenerate=bool(data.get('degenerate', False)),
                feature_names=data.get('feature_names'),
                n_inputs=int(data.get('n_inputs', 0)),
                train_metrics=dict(data.get('train_metrics') or {}),
                provenance=dict(data.get('provenance') or {}),
                library_version=data.get('library_version', LIBRARY_VERSION),
            )
        except (KeyError, TypeError) as e:
            raise DataError(f"Malformed model document: {e}")


def kfold_split(n, k, ordered=False, seed=0) -> np.ndarray:
    """Assign each of n samples to one of k folds

    Args:
        n: number of samples
        k: number of folds
        ordered: contiguous blocks (time series) instead of a seeded shuffle
        seed: shuffle seed

    Returns:
        np.ndarray: fold index per sample; the first n % k folds hold one extra sample
    """
    if k < 2:
        raise ConfigurationError(f"folds must be >= 2, got {k}")
    if n < k:
        raise DataError(f"{n} samples cannot be split into {k} folds")
    if ordered:
        splitter = KFold(n_splits=k)
    else:
        splitter = KFold(n_splits=k, shuffle=True, random_state=seed)
    assignment = np.empty(n, dtype=int)
    for fold, (_, held_out) in enumerate(splitter.split(np.zeros((n, 1)))):
        assignment[held_out] = fold
    return assignment


def _support_of(beta, cutoff):
    return tuple(np.flatnonzero(np.abs(beta) >= cutoff) if cutoff > 0 else np.flatnonzero(beta))


def _support_refit(system, support):
    """Least-squares coefficients on one support of a centered fold system"""
    beta = np.zeros(system.n_features)
    if support:
        columns = np.asarray(support, dtype=int)
        beta[columns] = np.linalg.lstsq(system.X[:, columns], system.y_centered, rcond=None)[0]
    return Coefficients(beta=beta, intercept=float(system.y_mean - system.x_mean @ beta))


def _fold_scores(raw, target, train, held_out, alphas, l1_ratios, tol, max_iter, support_cutoff=None):
    """Validation MSE in original units for every (l1_ratio, alpha) pair on one fold

    With ``support_cutoff`` set, a combination is scored as a feature selector: the
    columns it keeps (|beta| >= cutoff, or beta != 0 at cutoff 0) are refitted by least
    squares on the training rows and that refit is validated. Refits are shared by every
    combination with the same support.
    """
    scores = np.full((len(l1_ratios), len(alphas)), np.nan)
    refits = {}
    mean, std, constant = standardize(raw[train])
    safe = np.where(constant, 1.0, std)
    X_train = (raw[train] - mean) / safe
    X_val = (raw[held_out] - mean) / safe
    X_train[:, constant] = 0.0
    X_val[:, constant] = 0.0
    y_train = target[train]
    y_mean = float(y_train.mean())
    y_std = float(y_train.std()) or 1.0
    system = prepare_gram(X_train, (y_train - y_mean) / y_std)

    least_squares = None
    for i, ratio in enumerate(l1_ratios):
        warm = None
        for j, alpha in enumerate(alphas):
            try:
                if alpha == 0.0 and least_squares is not None:
                    coefs = least_squares
                else:
                    coefs = solve_enet(system, EnetConfig(alpha, ratio, tol, max_iter), warm_start=warm)
            except np.linalg.LinAlgError as e:
                logger.warning(f"Solver failed at alpha={alpha:.3g}, l1_ratio={ratio}: {e}")
                continue
            if alpha == 0.0:
                least_squares = coefs
            else:
                warm = coefs.beta
            if support_cutoff is not None:
                support = _support_of(coefs.beta, support_cutoff)
                if support not in refits:
                    try:
                        refits[support] = _support_refit(system, support)
                    except np.linalg.LinAlgError as e:
                        logger.warning(f"Support refit failed on {len(support)} columns: {e}")
                        refits[support] = None
                coefs = refits[support]
                if coefs is None:
                    continue
            prediction = y_mean + y_std * (coefs.intercept + X_val @ coefs.beta)
            if np.all(np.isfinite(prediction)):
                scores[i, j] = mean_squared_error(target[held_out], prediction)
    return scores


def _preference(record):
    # larger alpha, then smaller degree, then smaller lag, then larger l1_ratio
    return (-record.alpha, record.degree, record.lag, -record.l1_ratio)


def select_record(records: Sequence[CVRecord]) -> CVRecord:
    """Pick the record with the lowest mean MSE; exact ties go to the preferred record"""
    valid = [r for r in records if r.mse is not None]
    if not valid:
        raise CVSearchError("Every hyperparameter combination failed during cross-validation")
    best = min(r.mse for r in valid)
    return min((r for r in valid if r.mse == best), key=_preference)


def cv_search(X, y, grid: HyperGrid, l1_ratios=None, degree=None, lag=None, support=None,
              support_cutoff=None, seed=0, threads=None) -> CVResult:
    """Grid search over (alpha, l1_ratio, degree, lag) by k-fold cross-validation

    Every (degree, lag) pair is expanded once on the full series; each fold then
    re-standardizes its training rows and walks the alpha grid in descending order
    with warm starts.

    Args:
        X: n x m raw inputs
        y: length-n outputs
        grid: search space
        l1_ratios: overrides grid.l1_ratios (e.g. (1.0,) for a LASSO step)
        degree: fixes the degree instead of searching grid.degrees
        lag: fixes the lag instead of searching grid.lags
        support: restrict to these non-intercept design columns (needs fixed degree and lag)
        support_cutoff: score each combination by a least-squares refit on the columns it
            keeps at this cutoff (0 keeps every nonzero); None scores its own predictions
        seed: fold shuffle seed
        threads: joblib worker count (LCEN_THREADS wins when set)

    Returns:
        CVResult: table in (degree, lag, l1_ratio, descending alpha) order and the chosen record

    Raises:
        CVSearchError: every combination failed
    """
    y = np.asarray(y, dtype=float).ravel()
    l1_ratios = tuple(grid.l1_ratios if l1_ratios is None else l1_ratios)
    degrees = grid.degrees if degree is None else (degree,)
    lags = grid.lags if lag is None else (lag,)
    if support is not None and (len(degrees) != 1 or len(lags) != 1):
        raise ConfigurationError("A column support needs a fixed degree and lag")
    alphas = tuple(sorted({float(a) for a in grid.alphas}, reverse=True))

    designs = {}
    for d in degrees:
        for L in lags:
            try:
                D = expand(X, y, grid.expansion_config(d, L))
                raw = D.raw_features if support is None else D.raw_features[:, np.asarray(support, dtype=int)]
                designs[(d, L)] = (raw, D.target, kfold_split(len(D.target), grid.folds, ordered=L > 0, seed=seed))
            except DataError as e:
                logger.warning(f"CV combination degree={d}, lag={L} failed: {e}")

    jobs = [(key, fold) for key in designs for fold in range(grid.folds)]
    n_jobs = resolve_threads(threads)
    scores = Parallel(n_jobs=n_jobs)(
        delayed(_fold_scores)(designs[key][0], designs[key][1],
                              np.flatnonzero(designs[key][2] != fold), np.flatnonzero(designs[key][2] == fold),
                              alphas, l1_ratios, grid.tol, grid.max_iter, support_cutoff)
        for key, fold in jobs)

    per_design = {}
    for (key, _), fold_scores in zip(jobs, scores):
        per_design.setdefault(key, []).append(fold_scores)

    records = []
    for d in degrees:
        for L in lags:
            stacked = np.array(per_design[(d, L)]) if (d, L) in per_design else None
            for i, ratio in enumerate(l1_ratios):
                for j, alpha in enumerate(alphas):
                    mse = None
                    if stacked is not None and np.all(np.isfinite(stacked[:, i, j])):
                        mse = float(np.mean(stacked[:, i, j]))
                    records.append(CVRecord(alpha, float(ratio), int(d), int(L), mse))
                    logger.debug(f"CV degree={d} lag={L} l1_ratio={ratio} alpha={alpha:.4g} mse={mse}")

    chosen = select_record(records)
    failed = sum(r.failed for r in records)
    if failed:
        logger.warning(f"{failed} of {len(records)} CV combinations failed")
    return CVResult(records=records, chosen=chosen, seed=seed, folds=grid.folds)


def clip(coefs: Coefficients, cutoff: float) -> Coefficients:
    """Zero every standardized coefficient with magnitude below the cutoff; intercept untouched"""
    if not cutoff >= 0:
        raise ConfigurationError(f"cutoff must be >= 0, got {cutoff}")
    beta = np.asarray(coefs.beta, dtype=float)
    return replace(coefs, beta=np.where(np.abs(beta) < cutoff, 0.0, beta))


def _fit_columns(D, columns, record, grid):
    """Fit one CV-chosen combination on the full data, restricted to some design columns"""
    cfg = EnetConfig(alpha=record.alpha, l1_ratio=record.l1_ratio, tol=grid.tol, max_iter=grid.max_iter)
    fitted = fit_enet(D.features[:, columns], D.scaled_target, cfg)
    beta = np.zeros(D.features.shape[1])
    beta[columns] = fitted.beta
    return replace(fitted, beta=beta)


def _refit(X, y, D, columns, grid, l1_ratios, seed, threads, support_cutoff=None):
    """Elastic-net step: CV over (alpha, l1_ratio) on the given columns, then fit"""
    result = cv_search(X, y, grid, l1_ratios=l1_ratios, degree=D.config.degree, lag=D.config.lag,
                       support=columns, support_cutoff=support_cutoff, seed=seed, threads=threads)
    return _fit_columns(D, columns, result.chosen, grid), result


def _train_metrics(model, X, y):
    L = model.lag
    history = History(X[:L], y[:L]) if L else None
    predictions = predict(model, X[L:], history=history, y=y[L:])
    target = y[L:]
    result = {'rmse': float(np.sqrt(mean_squared_error(target, predictions)))}
    if np.any(target != 0):
        result.update(metrics(target, predictions))
    return result


def _assemble(D, beta, X, y, hyperparameters, cv_table, spec_name, seed, feature_names):
    """Turn a full-length standardized coefficient vector into a FittedModel"""
    support = np.flatnonzero(beta)
    scaled = beta[support]
    scaled_intercept = float(D.scaled_target.mean() - D.features.mean(axis=0) @ beta) if len(beta) else 0.0
    scaling = D.scaling.subset(support)
    unscaled, intercept = unscale(Coefficients(beta=scaled, intercept=scaled_intercept), scaling)
    model = FittedModel(
        terms=[D.feature_terms[i] for i in support],
        unscaled_beta=unscaled,
        intercept=intercept,
        scaled_beta=scaled,
        scaled_intercept=scaled_intercept,
        scaling=scaling,
        hyperparameters=hyperparameters,
        cv_table=cv_table,
        pipeline=spec_name,
        seed=seed,
        degenerate=not len(support),
        feature_names=feature_names,
        n_inputs=D.n_inputs,
    )
    if model.degenerate:
        logger.warning(f"{spec_name}: every feature was clipped; returning an intercept-only model")
    model.train_metrics = _train_metrics(model, X, y)
    return model


def _as_inputs(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != len(y):
        raise DimensionMismatchError(f"X has {X.shape[0]} rows but y has {len(y)}")
    return X, y


def fit_pipeline(X, y, grid: Optional[HyperGrid] = None, spec='LCEN', seed=0, threads=None,
                 feature_names=None, provenance=None) -> FittedModel:
    """Build a sparse model with LCEN or one of its ablated / variant pipelines

    Stage 1 cross-validates (alpha, degree, lag) with l1_ratio fixed to 1 for a LASSO
    step (or the whole l1_ratio list for an EN step) and records the best degree and
    lag. Stage 1 is scored by the least-squares refit of the columns it would keep, so
    a shrunken but wrong support cannot win on bias alone. The optional clip removes
    scaled coefficients below grid.cutoff. Stage 2 cross-validates (alpha, l1_ratio) on
    the surviving columns only, and the final clip removes what stage 2 shrank below
    the cutoff.

    Args:
        X: n x m raw inputs
        y: length-n outputs
        grid: search space and cutoff
        spec: PipelineSpec or name ('LCEN', 'LC', 'ENC', 'LEN', 'LCL', 'ENCEN')
        seed: fold shuffle seed
        threads: joblib worker count
        feature_names: names of the raw inputs, used in reports
        provenance: resolved run configuration echoed into the model

    Returns:
        FittedModel: degenerate (intercept-only) when every feature is clipped
    """
    grid = grid or HyperGrid()
    spec = pipeline_spec(spec)
    X, y = _as_inputs(X, y)

    first_ratios = (1.0,) if spec.first_stage == LASSO else grid.l1_ratios
    first_cutoff = grid.cutoff if spec.clip_after_first else 0.0
    stage1 = cv_search(X, y, grid, l1_ratios=first_ratios, support_cutoff=first_cutoff, seed=seed,
                       threads=threads)
    chosen = stage1.chosen
    logger.info(f"{spec.name} stage 1: degree={chosen.degree}, lag={chosen.lag}, "
                f"alpha={chosen.alpha:.4g}, l1_ratio={chosen.l1_ratio}")

    D = expand(X, y, grid.expansion_config(chosen.degree, chosen.lag))
    columns = np.arange(D.features.shape[1])
    coefs = _fit_columns(D, columns, chosen, grid)
    hyperparameters = {'degree': chosen.degree, 'lag': chosen.lag, 'cutoff': float(grid.cutoff),
                       'alpha': chosen.alpha, 'l1_ratio': chosen.l1_ratio,
                       'stage1_alpha': chosen.alpha, 'stage1_l1_ratio': chosen.l1_ratio}
    cv_table = {'stage1': stage1}

    if spec.clip_after_first:
        coefs = clip(coefs, grid.cutoff)
        survivors = np.flatnonzero(np.abs(coefs.beta) >= grid.cutoff)
    else:
        survivors = columns
    logger.info(f"{spec.name}: {len(survivors)} of {len(columns)} features enter the next step")

    if spec.second_stage != NONE and len(survivors):
        second_ratios = (1.0,) if spec.second_stage == LASSO else grid.l1_ratios
        # a second step on the whole expansion still selects features
        second_cutoff = None
        if len(survivors) == len(columns):
            second_cutoff = grid.cutoff if spec.clip_after_second else 0.0
        coefs, stage2 = _refit(X, y, D, survivors, grid, second_ratios, seed, threads, second_cutoff)
        cv_table['stage2'] = stage2
        hyperparameters.update(alpha=stage2.chosen.alpha, l1_ratio=stage2.chosen.l1_ratio)
        logger.info(f"{spec.name} stage 2: alpha={stage2.chosen.alpha:.4g}, l1_ratio={stage2.chosen.l1_ratio}")
        if spec.clip_after_second:
            coefs = clip(coefs, grid.cutoff)

    beta = coefs.beta if len(survivors) else np.zeros(len(columns))
    model = _assemble(D, beta, X, y, hyperparameters, cv_table, spec.name, seed, feature_names)
    model.provenance = dict(provenance or {})
    logger.info(f"{spec.name}: selected {model.n_features_selected} features")
    return model


def _intercept_only(model, cutoff):
    y_mean = model.scaling.y_mean if model.scaling is not None else model.intercept
    logger.warning(f"cutoff={cutoff:g} clips every feature; returning an intercept-only model")
    return replace(model, terms=[], unscaled_beta=np.zeros(0), scaled_beta=np.zeros(0),
                   intercept=float(y_mean), scaled_intercept=0.0,
                   scaling=model.scaling.subset([]) if model.scaling is not None else None,
                   hyperparameters={**model.hyperparameters, 'cutoff': float(cutoff)}, degenerate=True,
                   train_metrics={})


def sparsify(model: FittedModel, X, y, cutoffs: Sequence[float], grid: Optional[HyperGrid] = None,
             threads=None) -> List[FittedModel]:
    """Re-run the final clip and EN refit at increasing cutoffs

    Each cutoff starts from the previous result, so feature counts never increase.
    A cutoff that removes nothing returns the current model unchanged.

    Args:
        model: fitted model to sparsify
        X: raw inputs the model was fitted on
        y: outputs the model was fitted on
        cutoffs: ascending cutoffs, none below model.cutoff
        grid: search space for the EN refits (families, l1_ratios, alphas)

    Returns:
        list: one FittedModel per cutoff
    """
    grid = grid or HyperGrid()
    X, y = _as_inputs(X, y)
    cutoffs = [float(c) for c in cutoffs]
    if any(b < a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ConfigurationError(f"cutoffs must be ascending, got {cutoffs}")
    if cutoffs and cutoffs[0] < model.cutoff:
        raise ConfigurationError(f"cutoff {cutoffs[0]} is below the model's cutoff {model.cutoff}")

    D = None
    current = model
    models = []
    for cutoff in cutoffs:
        keep = np.abs(current.scaled_beta) >= cutoff
        if np.all(keep):
            if cutoff != current.cutoff:
                current = replace(current, hyperparameters={**current.hyperparameters, 'cutoff': cutoff})
        elif not np.any(keep):
            current = _intercept_only(current, cutoff)
        else:
            if D is None:
                D = expand(X, y, grid.expansion_config(model.degree, model.lag))
                index = {term: i for i, term in enumerate(D.feature_terms)}
            try:
                columns = np.array([index[t] for t, k in zip(current.terms, keep) if k])
            except KeyError as e:
                raise DataError(f"Model term {e} is not part of the expansion of this data")
            coefs, result = _refit(X, y, D, columns, grid, grid.l1_ratios, current.seed, threads)
            coefs = clip(coefs, cutoff)
            hyperparameters = {**current.hyperparameters, 'cutoff': cutoff,
                               'alpha': result.chosen.alpha, 'l1_ratio': result.chosen.l1_ratio}
            cv_table = {**current.cv_table, 'stage2': result}
            current = _assemble(D, coefs.beta, X, y, hyperparameters, cv_table, current.pipeline,
                                current.seed, current.feature_names)
            current.provenance = dict(model.provenance)
        logger.info(f"cutoff={cutoff:g}: {current.n_features_selected} features")
        models.append(current)
    return models


def _uses_inputs(terms):
    return any(f.variable >= 0 for t in terms for f in t.factors)


def predict(model: FittedModel, X, history: Optional[History] = None, y=None) -> np.ndarray:
    """Predict with unscaled coefficients on raw rows

    For lagged models the ``history`` supplies the ``lag`` steps before the first row.
    When observed outputs ``y`` for the rows are given the prediction is one step ahead;
    without them the rows are forecast recursively.

    Args:
        model: fitted model
        X: raw input rows (may have zero columns for purely autoregressive models)
        history: past inputs/outputs, required when model.lag > 0
        y: observed outputs aligned with X

    Returns:
        np.ndarray: one prediction per row
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1) if model.n_inputs <= 1 else X.reshape(1, -1)
    L = model.lag
    if L == 0:
        return model.intercept + term_columns(model.terms, X) @ model.unscaled_beta
    if history is None or len(history) < L:
        raise DataError(f"A history of at least {L} steps is required for a lag-{L} model")
    if y is None:
        return forecast(model, history, len(X), future_X=X)
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != X.shape[0]:
        raise DimensionMismatchError(f"X has {X.shape[0]} rows but y has {len(y)}")
    if history.X is None:
        if X.shape[1] and _uses_inputs(model.terms):
            raise DataError("history must include past inputs for a model with lagged input terms")
        past_X = np.zeros((L, X.shape[1]))
    else:
        past_X = history.X[-L:]
    series_X = np.vstack([past_X, X])
    series_y = np.concatenate([history.y[-L:], y])
    return model.intercept + term_columns(model.terms, series_X, series_y, lag=L) @ model.unscaled_beta


def forecast(model: FittedModel, history: History, horizon: int, future_X=None) -> np.ndarray:
    """Recursive multi-step forecast feeding each prediction back as a lagged output

    Args:
        model: fitted model with lag > 0
        history: observed past, at least model.lag steps
        horizon: number of steps to forecast
        future_X: raw inputs for the forecast steps (needed when the model uses inputs)

    Returns:
        np.ndarray: horizon predictions
    """
    if horizon < 1:
        raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
    L = model.lag
    if L < 1:
        raise ConfigurationError("Recursive forecasting needs a model with lag > 0")
    if len(history) < L:
        raise DataError(f"A history of at least {L} steps is required, got {len(history)}")
    if future_X is None:
        if _uses_inputs(model.terms):
            raise DataError("future_X is required for a model with input terms")
        future_X = np.zeros((horizon, model.n_inputs))
    future_X = np.asarray(future_X, dtype=float)
    if future_X.ndim == 1:
        future_X = future_X.reshape(-1, 1) if model.n_inputs <= 1 else future_X.reshape(1, -1)
    if future_X.shape[0] < horizon:
        raise DimensionMismatchError(f"future_X has {future_X.shape[0]} rows for a horizon of {horizon}")

    past_X = history.X[-L:] if history.X is not None else np.zeros((L, future_X.shape[1]))
    past_y = list(history.y[-L:])
    predictions = np.empty(horizon)
    for step in range(horizon):
        features = evaluate_terms(model.terms, future_X[step], past_X, np.asarray(past_y))
        predictions[step] = model.intercept + features @ model.unscaled_beta
        past_X = np.vstack([past_X[1:], future_X[step]])
        past_y = past_y[1:] + [predictions[step]]
    return predictions


def vif(X) -> np.ndarray:
    """Variance inflation factor of every column; perfect collinearity gives +inf

    Args:
        X: n x m raw matrix with n > m >= 2

    Returns:
        np.ndarray: VIF_j = 1 / (1 - R_j^2) from regressing column j on the others
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise DataError(f"VIF needs at least 2 columns, got shape {X.shape}")
    n, m = X.shape
    if n <= m:
        raise DataError(f"VIF needs more rows than columns, got {n} x {m}")

    values = np.empty(m)
    for j in range(m):
        others = np.delete(X, j, axis=1)
        reg = LinearRegression().fit(others, X[:, j])
        r2 = r2_score(X[:, j], reg.predict(others))
        values[j] = np.inf if 1.0 - r2 <= 1e-12 else 1.0 / (1.0 - r2)
    return values


def metrics(y_true, y_pred) -> Dict[str, float]:
    """RMSE, MSE and mean relative error (%) over entries with y != 0"""
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if len(y_true) != len(y_pred):
        raise DimensionMismatchError(f"{len(y_true)} targets but {len(y_pred)} predictions")
    if not len(y_true):
        raise DataError("metrics need at least one sample")
    nonzero = y_true != 0
    if not np.any(nonzero):
        raise DataError("mean relative error is undefined when every target is zero")
    mse = float(mean_squared_error(y_true, y_pred))
    relative = np.abs(y_pred[nonzero] - y_true[nonzero]) / np.abs(y_true[nonzero])
    return {'rmse': math.sqrt(mse), 'mse': mse, 'mean_relative_error': float(np.mean(relative) * 100.0)}


def model_equation(model: FittedModel, names=None, target='y', digits=6) -> str:
    """Render the model as an equation, e.g. ``y = 365.25·a^1.5 + 0.12``"""
    names = names or model.feature_names
    pieces = [(float(coef), term.render(names)) for term, coef in zip(model.terms, model.unscaled_beta)]
    if model.intercept != 0 or not pieces:
        pieces.append((float(model.intercept), None))

    text = ''
    for i, (coef, label) in enumerate(pieces):
        magnitude = f"{abs(coef):.{digits}g}"
        piece = magnitude if label is None else f"{magnitude}·{label}"
        if i == 0:
            text = f"-{piece}" if coef < 0 else piece
        else:
            text += f" - {piece}" if coef < 0 else f" + {piece}"
    return f"{target} = {text}"
