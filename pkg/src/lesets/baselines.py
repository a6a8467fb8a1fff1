"""Conventional regressors on composition summary descriptors.

Ridge, Lasso and k-nearest neighbors operate on a 12-dimensional vector per
alloy: the fraction-weighted mean and standard deviation of the six
continuous elemental descriptors. Hyperparameters are picked by 5-fold
cross-validation on a 40% tuning subset; performance is measured on
repeated 2:1 train:test splits of the remaining rows.
"""

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from rich.console import Console
from scipy.spatial.distance import cdist
from sklearn.metrics import mean_absolute_error
from sklearn.model_selection import KFold
from sklearn.preprocessing import StandardScaler

from lesets.elemtable import CONTINUOUS_FIELDS, ElementTable
from lesets.representation import Composition
from lesets.train import REPLICATE_FAILURES, BenchmarkResult, ReplicateResult, parallel_map, regression_metrics

console = Console()

SUMMARY_COLUMNS = [f"mean_{name}" for name in CONTINUOUS_FIELDS] + [f"std_{name}" for name in CONTINUOUS_FIELDS]

LASSO_TOLERANCE = 1e-8
LASSO_MAX_ITER = 100_000

RIDGE_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0)
LASSO_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)
KNN_GRID = (1, 2, 3, 5, 7, 10, 15, 20)


def summarize_composition(comp: Composition, table: ElementTable) -> np.ndarray:
    """Fraction-weighted mean and standard deviation of each continuous descriptor.

    Raises:
        UnknownElementError: If an element is not in the table.
    """
    descriptors = np.stack([table.get(symbol).continuous for symbol in comp.symbols])
    w = comp.fractions
    mean = w @ descriptors
    std = np.sqrt(np.maximum(w @ (descriptors - mean) ** 2, 0.0))
    return np.concatenate([mean, std])


def summarize_many(comps: Sequence[Composition], table: ElementTable) -> np.ndarray:
    if not comps:
        return np.zeros((0, len(SUMMARY_COLUMNS)))
    return np.stack([summarize_composition(c, table) for c in comps])


@dataclass(frozen=True)
class LinearModel:
    """Weights on standardized features plus an unpenalized intercept."""

    coef: np.ndarray
    intercept: float
    standardizer: StandardScaler

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.standardizer.transform(X) @ self.coef + self.intercept


def _check_xy(X, y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] == 0:
        raise ValueError("cannot fit on zero rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in training data")
    return X, y


def ridge_fit(X, y, lam: float) -> LinearModel:
    """Solve ``(X^T X + lam I) w = X^T (y - mean(y))`` on standardized, centered features.

    Raises:
        ValueError: If ``lam`` is negative, or the system is singular at ``lam == 0``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    X, y = _check_xy(X, y)
    standardizer = StandardScaler().fit(X)
    Xs = standardizer.transform(X)
    y_mean = float(y.mean())
    gram = Xs.T @ Xs + lam * np.eye(Xs.shape[1])
    if lam == 0 and np.linalg.matrix_rank(Xs) < Xs.shape[1]:
        raise ValueError("singular system: features are rank deficient and lambda is 0")
    try:
        coef = np.linalg.solve(gram, Xs.T @ (y - y_mean))
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular system: {exc}") from exc
    return LinearModel(coef=coef, intercept=y_mean, standardizer=standardizer)


def ridge_predict(model: LinearModel, X) -> np.ndarray:
    return model.predict(X)


def _soft_threshold(value: float, threshold: float) -> float:
    if value > threshold:
        return value - threshold
    if value < -threshold:
        return value + threshold
    return 0.0


def lasso_fit(X, y, lam: float, tol: float = LASSO_TOLERANCE, max_iter: int = LASSO_MAX_ITER) -> LinearModel:
    """Coordinate descent on ``(1/2n) ||y - b - X w||^2 + lam ||w||_1`` with standardized X.

    Iterates until the largest coordinate update of a sweep is below ``tol``.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    X, y = _check_xy(X, y)
    standardizer = StandardScaler().fit(X)
    Xs = standardizer.transform(X)
    n, p = Xs.shape
    y_mean = float(y.mean())
    residual = y - y_mean
    col_sq = (Xs**2).sum(axis=0) / n
    coef = np.zeros(p)

    for _ in range(max_iter):
        largest = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = coef[j]
            rho = Xs[:, j] @ residual / n + col_sq[j] * old
            new = _soft_threshold(rho, lam) / col_sq[j]
            if new != old:
                residual -= Xs[:, j] * (new - old)
                coef[j] = new
                largest = max(largest, abs(new - old))
        if largest < tol:
            break
    else:
        console.print(f"[yellow]lasso did not converge in {max_iter} sweeps (lambda={lam:g})[/yellow]")
    return LinearModel(coef=coef, intercept=y_mean, standardizer=standardizer)


@dataclass(frozen=True)
class KNNRegressor:
    """Mean target of the k nearest training rows in standardized Euclidean space.

    Ties in distance go to the lower training row index.
    """

    X: np.ndarray
    y: np.ndarray
    k: int
    standardizer: StandardScaler

    @classmethod
    def fit(cls, X, y, k: int) -> "KNNRegressor":
        X, y = _check_xy(X, y)
        if k < 1:
            raise ValueError("k must be at least 1")
        if k > X.shape[0]:
            raise ValueError(f"k={k} exceeds the {X.shape[0]} training rows")
        standardizer = StandardScaler().fit(X)
        return cls(X=standardizer.transform(X), y=y.copy(), k=k, standardizer=standardizer)

    def predict(self, X) -> np.ndarray:
        query = self.standardizer.transform(np.atleast_2d(np.asarray(X, dtype=np.float64)))
        distances = cdist(query, self.X, "sqeuclidean")
        nearest = np.argsort(distances, axis=1, kind="stable")[:, : self.k]
        return self.y[nearest].mean(axis=1)


def knn_predict(X_train, y_train, X, k: int) -> np.ndarray:
    return KNNRegressor.fit(X_train, y_train, k).predict(X)


# Tuning and assessment protocol

FitPredict = Callable[[np.ndarray, np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class BaselineMethod:
    name: str
    param_name: str
    grid: tuple[float, ...]
    fit_predict: FitPredict


BASELINES: dict[str, BaselineMethod] = {
    "ridge": BaselineMethod(
        "ridge", "lambda", RIDGE_GRID, lambda Xtr, ytr, Xte, lam: ridge_fit(Xtr, ytr, lam).predict(Xte)
    ),
    "lasso": BaselineMethod(
        "lasso", "lambda", LASSO_GRID, lambda Xtr, ytr, Xte, lam: lasso_fit(Xtr, ytr, lam).predict(Xte)
    ),
    "knn": BaselineMethod("knn", "k", KNN_GRID, lambda Xtr, ytr, Xte, k: knn_predict(Xtr, ytr, Xte, int(k))),
}


def _kfold(n: int, folds: int, seed: int) -> KFold:
    if folds < 2 or n < folds:
        raise ValueError(f"cannot make {folds} folds from {n} rows")
    return KFold(n_splits=folds, shuffle=True, random_state=seed)


def kfold_indices(n: int, folds: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Held-out row indices of each fold of a seeded, shuffled k-fold split of ``range(n)``."""
    return [held for _, held in _kfold(n, folds, seed).split(np.arange(n))]


def cross_validate(method: BaselineMethod, X: np.ndarray, y: np.ndarray, param: float, folds: int = 5, seed: int = 0) -> float:
    """Mean validation MAE of one hyperparameter value over k folds."""
    errors = [
        mean_absolute_error(y[held], method.fit_predict(X[fit], y[fit], X[held], param))
        for fit, held in _kfold(len(y), folds, seed).split(X)
    ]
    return float(np.mean(errors))


@dataclass(frozen=True)
class TuningResult:
    method: str
    param_name: str
    best_param: float
    cv_mae: dict[float, float]


def grid_search(method: BaselineMethod, X: np.ndarray, y: np.ndarray, folds: int = 5, seed: int = 0) -> TuningResult:
    """Pick the grid value with the lowest cross-validated MAE (first wins ties)."""
    smallest_train = len(y) - math.ceil(len(y) / folds)
    grid = [g for g in method.grid if method.name != "knn" or g <= smallest_train]
    if not grid:
        raise ValueError(f"no {method.param_name} value fits a tuning set of {len(y)} rows")
    scores: dict[float, float] = {}
    for param in grid:
        try:
            scores[param] = cross_validate(method, X, y, param, folds, seed)
        except ValueError as exc:
            console.print(f"[yellow]{method.name} {method.param_name}={param:g} skipped: {exc}[/yellow]")
    if not scores:
        raise ValueError(f"every {method.name} grid value failed")
    best = min(scores, key=lambda p: scores[p])
    return TuningResult(method=method.name, param_name=method.param_name, best_param=best, cv_mae=scores)


@dataclass
class BaselineResult:
    tuning: TuningResult
    benchmark: BenchmarkResult


def baseline_benchmark(
    X: np.ndarray,
    y: np.ndarray,
    method: str | BaselineMethod,
    n_replicates: int = 30,
    first_seed: int = 0,
    tune_fraction: float = 0.4,
    threads: int = 1,
) -> BaselineResult:
    """Tune on a seeded ``tune_fraction`` subset, then assess on repeated 2:1 splits of the rest.

    Args:
        X: Summary descriptor matrix (rows, 12).
        y: Targets.
        method: ``ridge``, ``lasso``, ``knn`` or a BaselineMethod.
        n_replicates: Number of assessment splits (seeds ``first_seed ..``).
        first_seed: Seed of the tuning subset and the first assessment split.
        tune_fraction: Share of rows used for grid search.
        threads: Replicate parallelism.

    Returns:
        Tuning outcome and per-replicate metrics in the neural benchmark format.
    """
    X, y = _check_xy(X, y)
    if isinstance(method, str):
        if method not in BASELINES:
            raise ValueError(f"unknown baseline {method!r}; expected one of {', '.join(BASELINES)}")
        method = BASELINES[method]
    if not 0 < tune_fraction < 1:
        raise ValueError("tune_fraction must be in (0, 1)")
    n = len(y)
    n_tune = int(math.floor(tune_fraction * n + 1e-9))
    if n_tune < 5 or n - n_tune < 3:
        raise ValueError(f"dataset too small: {n} rows")

    order = np.random.default_rng(first_seed).permutation(n)
    tune_idx, assess_idx = order[:n_tune], order[n_tune:]
    tuning = grid_search(method, X[tune_idx], y[tune_idx], seed=first_seed)
    console.print(
        f"[dim]{method.name}: {method.param_name}={tuning.best_param:g} "
        f"(CV MAE {tuning.cv_mae[tuning.best_param]:.4g})[/dim]"
    )
    X_assess, y_assess = X[assess_idx], y[assess_idx]

    def run(seed: int) -> ReplicateResult:
        perm = np.random.default_rng(seed).permutation(len(y_assess))
        n_test = len(y_assess) // 3
        test, train = perm[:n_test], perm[n_test:]
        try:
            pred = method.fit_predict(X_assess[train], y_assess[train], X_assess[test], tuning.best_param)
            metrics = regression_metrics(y_assess[test], pred)
        except REPLICATE_FAILURES as exc:
            console.print(f"[red]✗ {method.name} replicate {seed} failed: {exc}[/red]")
            return ReplicateResult(seed=seed, mae=None, r2=None, epochs=None, status="failed", error=str(exc))
        return ReplicateResult(seed=seed, mae=metrics.mae, r2=metrics.r2, epochs=None)

    seeds = list(range(first_seed, first_seed + n_replicates))
    replicates = parallel_map(run, seeds, threads)
    return BaselineResult(tuning=tuning, benchmark=BenchmarkResult(replicates=replicates))
