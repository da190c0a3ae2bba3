#!/usr/bin/env python3
"""
Elastic Net Core
Elastic-net / LASSO / ridge / OLS estimation on standardized data. Penalized fits run
scikit-learn's Gram-matrix coordinate descent; alpha=0 and l1_ratio=0 use closed forms. Objective:

    (1/2n) ||y - X beta||^2 + alpha * (rho ||beta||_1 + (1 - rho)/2 ||beta||_2^2)
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import enet_path

from errors import ConfigurationError, DataError, DimensionMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EnetConfig:
    """Solver settings for one elastic-net fit"""
    alpha: float = 1.0
    l1_ratio: float = 1.0
    tol: float = 1e-6
    max_iter: int = 10_000

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ConfigurationError(f"alpha must be >= 0, got {self.alpha}")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ConfigurationError(f"l1_ratio must lie in [0, 1], got {self.l1_ratio}")
        if not self.tol > 0:
            raise ConfigurationError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass
class Coefficients:
    """Fitted coefficients in standardized units"""
    beta: np.ndarray
    intercept: float = 0.0
    n_iters: int = 0
    converged: bool = True
    objective_path: List[float] = field(default_factory=list)

    @property
    def support(self):
        return np.flatnonzero(self.beta)


@dataclass
class GramSystem:
    """Centered least-squares system shared by every fit on the same data"""
    X: np.ndarray
    gram: np.ndarray
    xty: np.ndarray
    yty: float
    y_centered: np.ndarray
    x_mean: np.ndarray
    y_mean: float
    n_samples: int

    @property
    def n_features(self):
        return self.gram.shape[0]


def soft_threshold(z, t):
    """sign(z) * max(|z| - t, 0) for scalars or arrays"""
    if np.any(np.asarray(t) < 0):
        raise ConfigurationError(f"threshold must be >= 0, got {t}")
    if np.ndim(z) == 0:
        z = float(z)
        if z > t:
            return z - t
        if z < -t:
            return z + t
        return 0.0
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def prepare_gram(X, y) -> GramSystem:
    """Center X and y and precompute X'X/n and X'y/n

    Args:
        X: n x p feature matrix (no intercept column)
        y: length-n target

    Returns:
        GramSystem: centered system
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise DimensionMismatchError(f"X must be 2-D, got shape {X.shape}")
    if X.shape[0] != len(y):
        raise DimensionMismatchError(f"X has {X.shape[0]} rows but y has {len(y)}")
    n = X.shape[0]
    if n < 2:
        raise DataError(f"At least 2 samples are required, got {n}")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    return GramSystem(X=Xc, gram=Xc.T @ Xc / n, xty=Xc.T @ yc / n, yty=float(yc @ yc) / n, y_centered=yc,
                      x_mean=x_mean, y_mean=y_mean, n_samples=n)


def enet_objective(system: GramSystem, beta, cfg: EnetConfig) -> float:
    """Penalized objective evaluated through the Gram system"""
    beta = np.asarray(beta, dtype=float)
    loss = 0.5 * system.yty - system.xty @ beta + 0.5 * beta @ (system.gram @ beta)
    penalty = cfg.alpha * (cfg.l1_ratio * np.abs(beta).sum() + 0.5 * (1 - cfg.l1_ratio) * beta @ beta)
    return float(loss + penalty)


def _coordinate_descent(system, cfg, beta):
    # sklearn scales both penalties by n, so it takes the unnormalized Gram system
    n = system.n_samples
    path = [enet_objective(system, beta, cfg)]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', ConvergenceWarning)
        _, coef_path, _, n_iters = enet_path(
            system.X, system.y_centered, l1_ratio=cfg.l1_ratio, alphas=[cfg.alpha],
            precompute=np.ascontiguousarray(n * system.gram), Xy=n * system.xty,
            coef_init=beta, max_iter=cfg.max_iter, tol=cfg.tol, return_n_iter=True)
    beta = coef_path[:, 0]
    converged = not any(issubclass(w.category, ConvergenceWarning) for w in caught)
    path.append(enet_objective(system, beta, cfg))
    return beta, int(n_iters[0]), converged, path


def solve_enet(system: GramSystem, cfg: EnetConfig, warm_start=None) -> Coefficients:
    """Solve the elastic net on a prepared Gram system

    Args:
        system: centered system from prepare_gram
        cfg: solver settings
        warm_start: optional starting coefficients (used along a descending alpha grid)

    Returns:
        Coefficients: beta, intercept, iteration count and convergence flag
    """
    p = system.n_features
    if p == 0:
        return Coefficients(beta=np.zeros(0), intercept=system.y_mean)

    if system.yty == 0.0:
        coefs = Coefficients(beta=np.zeros(p), objective_path=[0.0])
    elif cfg.alpha == 0.0:
        # least squares; lstsq returns the minimum-norm solution on rank deficiency
        beta = np.linalg.lstsq(system.X, system.y_centered, rcond=None)[0]
        coefs = Coefficients(beta=beta, n_iters=0, converged=True,
                             objective_path=[enet_objective(system, beta, cfg)])
    elif cfg.l1_ratio == 0.0:
        beta = np.linalg.solve(system.gram + cfg.alpha * np.eye(p), system.xty)
        coefs = Coefficients(beta=beta, n_iters=0, converged=True,
                             objective_path=[enet_objective(system, beta, cfg)])
    else:
        start = np.zeros(p) if warm_start is None else np.asarray(warm_start, dtype=float)
        if start.shape != (p,):
            raise DimensionMismatchError(f"warm start has shape {start.shape}, expected ({p},)")
        beta, n_iters, converged, path = _coordinate_descent(system, cfg, start)
        if not converged:
            logger.warning(f"Coordinate descent did not converge in {cfg.max_iter} iterations "
                           f"(alpha={cfg.alpha:.3g}, l1_ratio={cfg.l1_ratio})")
        coefs = Coefficients(beta=beta, n_iters=n_iters, converged=converged, objective_path=path)

    coefs.intercept = float(system.y_mean - system.x_mean @ coefs.beta)
    return coefs


def fit_enet(D, y, cfg: Optional[EnetConfig] = None, warm_start=None) -> Coefficients:
    """Fit the elastic net on standardized columns

    Args:
        D: DesignMatrix (its standardized non-intercept columns are used) or an n x p array
        y: standardized output
        cfg: solver settings (alpha=0 gives least squares, l1_ratio=0 gives ridge)
        warm_start: optional starting coefficients

    Returns:
        Coefficients: one entry per non-intercept column
    """
    cfg = cfg or EnetConfig()
    X = D.features if hasattr(D, 'features') else D
    system = prepare_gram(X, y)
    return solve_enet(system, cfg, warm_start=warm_start)


def unscale(coefs: Coefficients, scaling) -> Tuple[np.ndarray, float]:
    """Convert standardized coefficients to original units

    Args:
        coefs: coefficients fitted on standardized columns and standardized y
        scaling: ScalingInfo with per-column mean/std and y_mean/y_std

    Returns:
        tuple: (unscaled beta, unscaled intercept)
    """
    beta = np.asarray(coefs.beta, dtype=float)
    mean = np.asarray(scaling.mean, dtype=float)
    std = np.asarray(scaling.std, dtype=float)
    if beta.shape != mean.shape or beta.shape != std.shape:
        raise DimensionMismatchError(
            f"{len(beta)} coefficients but scaling describes {len(mean)} columns")
    ratio = beta / std
    unscaled = scaling.y_std * ratio
    intercept = scaling.y_mean + scaling.y_std * (coefs.intercept - float(ratio @ mean))
    return unscaled, float(intercept)
