#!/usr/bin/env python3
"""
Experiment Drivers
Desk-scale reruns of the artificial-data studies (noise robustness, relativistic
energy, multicollinearity, degree selection), pipeline ablations and cutoff sweeps.
Every driver returns a plot-ready pandas DataFrame.
"""

import logging
import math
import time
from dataclasses import replace
from typing import Dict, Optional, Sequence

import numpy as np
import pandas as pd

from config import PIPELINE_NAMES
from datagen import NoiseSpec, gen_linear5, gen_multicollinear, gen_quartic, gen_relativistic
from errors import ConfigurationError
from pipeline import HyperGrid, History, fit_pipeline, metrics, predict, sparsify, vif

logger = logging.getLogger(__name__)

DEGREE_STUDY_KINDS = {
    'unbiased': (4,),
    'biased': (2,),
    'cv': tuple(range(1, 11)),
    'cv_limited': (2, 4),
}


def coefficient_errors(model, true_terms, true_coefficients) -> Dict:
    """Compare a model against a known generating model

    Returns:
        dict: support_exact, coef_rmse over the union of both supports (missing and
        spurious terms count against zero), max_error_pct over the true terms and
        error_pct per true term display
    """
    fitted = {term: float(c) for term, c in zip(model.terms, model.unscaled_beta)}
    truth = {term: float(c) for term, c in zip(true_terms, true_coefficients)}
    union = list(truth) + [t for t in fitted if t not in truth]
    diffs = np.array([fitted.get(t, 0.0) - truth.get(t, 0.0) for t in union])
    per_term = {t.display: abs(fitted.get(t, 0.0) - c) / abs(c) * 100.0 for t, c in truth.items()}
    return {
        'support_exact': set(fitted) == set(truth),
        'coef_rmse': float(np.sqrt(np.mean(diffs ** 2))) if len(diffs) else 0.0,
        'max_error_pct': max(per_term.values()) if per_term else 0.0,
        'error_pct': per_term,
    }


def _test_rmse(model, X_train, y_train, X_test, y_test):
    if X_test is None or y_test is None:
        return None
    L = model.lag
    history = History(X_train[len(X_train) - L:], y_train[len(y_train) - L:]) if L else None
    predictions = predict(model, X_test, history=history, y=y_test if L else None)
    return float(np.sqrt(np.mean((predictions - np.asarray(y_test, dtype=float)) ** 2)))


def _validation_rmse(model):
    stage = model.cv_table.get('stage2') or model.cv_table.get('stage1')
    if stage is None or model.degenerate:
        return None
    return math.sqrt(stage.chosen.mse)


def noise_sweep(levels=(0.0, 60.0, 119.0, 238.0), seeds=(0,), n=1000, grid: Optional[HyperGrid] = None,
                threads=None) -> pd.DataFrame:
    """Support recovery and coefficient RMSE on the linear 5-variable data across noise levels"""
    grid = grid or HyperGrid()
    rows = []
    for level in levels:
        for seed in seeds:
            data = gen_linear5(n, NoiseSpec(level=level, seed=seed))
            model = fit_pipeline(data.X, data.y, grid, 'LCEN', seed=seed, threads=threads)
            errors = coefficient_errors(model, data.true_support, data.true_coefficients)
            rows.append({'noise_pct': level, 'seed': seed, 'n_features': model.n_features_selected,
                         'support_exact': errors['support_exact'], 'coef_rmse': errors['coef_rmse']})
            logger.info(f"noise {level}% seed {seed}: {model.n_features_selected} features, "
                        f"coef RMSE {errors['coef_rmse']:.3g}")
    return pd.DataFrame(rows)


def relativistic_sweep(levels=(0.0, 5.0, 10.0, 20.0, 30.0), mass_max=100, n=1000, seed=0,
                       grid: Optional[HyperGrid] = None, threads=None) -> pd.DataFrame:
    """Relative coefficient errors (%) for c^4 and c^2 on relativistic-energy data"""
    grid = grid or HyperGrid(degrees=tuple(range(1, 7)))
    rows = []
    for level in levels:
        data = gen_relativistic(n, mass_max, NoiseSpec(level=level, seed=seed))
        model = fit_pipeline(data.X, data.y, grid, 'LCEN', seed=seed, threads=threads)
        errors = coefficient_errors(model, data.true_support, data.true_coefficients)
        row = {'noise_pct': level, 'mass_max': mass_max, 'n_features': model.n_features_selected,
               'support_exact': errors['support_exact']}
        row.update({f"error_pct[{k}]": v for k, v in errors['error_pct'].items()})
        rows.append(row)
    return pd.DataFrame(rows)


def _collinearity_category(both_selected, max_error_pct):
    if not both_selected:
        return 'one variable'
    for bound in (5, 10, 20):
        if max_error_pct <= bound:
            return f"<={bound}%"
    return '>20%'


def multicollinearity_map(eps1_levels=(0.0, 1.0, 2.0, 5.0, 10.0), eps2_levels=(0.0, 1.0, 2.0, 5.0, 10.0),
                          n=1000, seed=0, grid: Optional[HyperGrid] = None, threads=None) -> pd.DataFrame:
    """Selection outcome on the (eps1, eps2) noise grid of the two-variable collinear data"""
    grid = grid or HyperGrid(degrees=(1,))
    rows = []
    for eps1 in eps1_levels:
        for eps2 in eps2_levels:
            data = gen_multicollinear(n, NoiseSpec(level=eps1, seed=seed), NoiseSpec(level=eps2, seed=seed + 1))
            inflation = float(vif(data.X)[0])
            model = fit_pipeline(data.X, data.y, grid, 'LCEN', seed=seed, threads=threads)
            errors = coefficient_errors(model, data.true_support, data.true_coefficients)
            selected = {t.display for t in model.terms}
            both = {'X0', 'X1'} <= selected
            rows.append({'eps1_pct': eps1, 'eps2_pct': eps2, 'vif': inflation, 'both_selected': both,
                         'max_error_pct': errors['max_error_pct'],
                         'category': _collinearity_category(both, errors['max_error_pct'])})
    return pd.DataFrame(rows)


def degree_selection_study(noise_variances=(0.0, 10.0, 30.0, 100.0), seeds=range(50), kinds=tuple(DEGREE_STUDY_KINDS),
                           grid: Optional[HyperGrid] = None, threads=None) -> pd.DataFrame:
    """Selected degree and test MSE of LCEN on the quartic data for several degree searches

    Kinds: 'unbiased' fixes degree 4, 'biased' fixes degree 2, 'cv' searches 1..10 and
    'cv_limited' searches {2, 4}.
    """
    grid = grid or HyperGrid()
    unknown = set(kinds) - set(DEGREE_STUDY_KINDS)
    if unknown:
        raise ConfigurationError(f"Unknown study kinds: {sorted(unknown)}")
    rows = []
    for variance in noise_variances:
        for seed in seeds:
            train, test = gen_quartic(noise_variance=variance, seed=seed)
            for kind in kinds:
                kind_grid = replace(grid, degrees=DEGREE_STUDY_KINDS[kind])
                model = fit_pipeline(train.X, train.y, kind_grid, 'LCEN', seed=seed, threads=threads)
                mse = metrics(test.y, predict(model, test.X))['mse']
                rows.append({'noise_variance': variance, 'seed': seed, 'kind': kind,
                             'degree': model.degree, 'test_mse': mse})
    return pd.DataFrame(rows)


def summarize_degree_study(frame: pd.DataFrame) -> pd.DataFrame:
    """Median and quartiles of test MSE plus the share of degree-4 picks per (noise, kind)"""
    grouped = frame.groupby(['noise_variance', 'kind'], sort=True)
    summary = grouped['test_mse'].quantile([0.25, 0.5, 0.75]).unstack()
    summary.columns = ['mse_q25', 'mse_median', 'mse_q75']
    summary['degree4_share'] = grouped['degree'].apply(lambda d: float(np.mean(d == 4)))
    return summary.reset_index()


def ablation_table(X, y, grid: Optional[HyperGrid] = None, pipelines: Sequence[str] = PIPELINE_NAMES,
                   X_test=None, y_test=None, truth=None, seed=0, threads=None) -> pd.DataFrame:
    """Fit every pipeline on the same data and compare error, sparsity and runtime

    Args:
        truth: optional (terms, coefficients) of the generating model

    Returns:
        pd.DataFrame: one row per pipeline
    """
    grid = grid or HyperGrid()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    rows = []
    for name in pipelines:
        start = time.perf_counter()
        model = fit_pipeline(X, y, grid, name, seed=seed, threads=threads)
        runtime = time.perf_counter() - start
        row = {'pipeline': model.pipeline, 'val_rmse': _validation_rmse(model),
               'test_rmse': _test_rmse(model, X, y, X_test, y_test),
               'n_features': model.n_features_selected, 'runtime_s': runtime}
        if truth is not None:
            errors = coefficient_errors(model, *truth)
            row.update({'support_exact': errors['support_exact'], 'max_coef_error_pct': errors['max_error_pct']})
        rows.append(row)
        logger.info(f"{model.pipeline}: {model.n_features_selected} features in {runtime:.2f} s")
    return pd.DataFrame(rows)


def sweep_table(model, X, y, cutoffs, grid: Optional[HyperGrid] = None, X_test=None, y_test=None,
                threads=None) -> pd.DataFrame:
    """(cutoff, n_features, val RMSE, test RMSE) along ascending cutoffs"""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    rows = []
    for cutoff, sparse in zip(cutoffs, sparsify(model, X, y, cutoffs, grid, threads=threads)):
        rows.append({'cutoff': float(cutoff), 'n_features': sparse.n_features_selected,
                     'val_rmse': _validation_rmse(sparse),
                     'test_rmse': _test_rmse(sparse, X, y, X_test, y_test)})
    return pd.DataFrame(rows, columns=['cutoff', 'n_features', 'val_rmse', 'test_rmse'])
