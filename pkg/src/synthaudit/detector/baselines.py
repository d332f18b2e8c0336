"""Logistic-regression and random-forest baseline detectors."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cart import grow_tree
from ..dataset import ColumnSchema, DetectionDataset, TabularDataset, schema_fingerprint
from ..errors import DataError, ModelError, SchemaMismatchError
from ..trees import CompiledForest, Tree
from .metrics import sigmoid

LOGISTIC_LAMBDA = 1e-2


class _SchemaBound:
    schema: tuple[ColumnSchema, ...]

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, TabularDataset):
            if X.fingerprint() != schema_fingerprint(self.schema):
                raise SchemaMismatchError("dataset schema does not match the model's schema fingerprint")
            return X.values
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != len(self.schema):
            raise SchemaMismatchError(f"expected {len(self.schema)} columns, got {X.shape[1]}")
        return X


@dataclass(eq=False)
class LogisticModel(_SchemaBound):
    schema: tuple[ColumnSchema, ...]
    coef: np.ndarray
    intercept: float
    center: np.ndarray
    scale: np.ndarray
    n_iter: int = 0

    def design(self, X: np.ndarray) -> np.ndarray:
        cols = []
        for j, col in enumerate(self.schema):
            if col.is_categorical:
                codes = X[:, j].astype(np.int64)
                cols.append((codes[:, None] == np.arange(len(col.categories))[None, :]).astype(float))
            else:
                cols.append(((X[:, j] - self.center[j]) / self.scale[j])[:, None])
        return np.hstack(cols) if cols else np.zeros((X.shape[0], 0))

    def predict_raw(self, X) -> np.ndarray:
        return self.intercept + self.design(self._matrix(X)) @ self.coef

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_raw(X))


def fit_logistic(X: np.ndarray, y: np.ndarray, schema, lam: float = LOGISTIC_LAMBDA,
                 max_iter: int = 100, tol: float = 1e-8) -> LogisticModel:
    """L2-penalised logistic regression by iteratively reweighted least squares.

    Numeric columns are standardised, categorical columns one-hot encoded; the
    intercept is not penalised.
    """
    schema = tuple(schema)
    center = np.array([0.0 if c.is_categorical else X[:, j].mean() for j, c in enumerate(schema)])
    scale = np.array([1.0 if c.is_categorical else (X[:, j].std() or 1.0) for j, c in enumerate(schema)])
    model = LogisticModel(schema, np.zeros(0), 0.0, center, scale)
    Z = np.hstack([np.ones((X.shape[0], 1)), model.design(X)])
    beta = np.zeros(Z.shape[1])
    penalty = np.full(Z.shape[1], lam)
    penalty[0] = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        eta = Z @ beta
        mu = sigmoid(eta)
        w = np.maximum(mu * (1 - mu), 1e-10)
        # Newton step on the penalised log-likelihood
        grad = Z.T @ (y - mu) - penalty * beta
        hess = (Z * w[:, None]).T @ Z + np.diag(penalty) + 1e-12 * np.eye(Z.shape[1])
        step = np.linalg.solve(hess, grad)
        beta = beta + step
        if np.max(np.abs(step)) < tol:
            break
    model.intercept = float(beta[0])
    model.coef = beta[1:]
    model.n_iter = it
    return model


@dataclass(eq=False)
class RandomForestModel(_SchemaBound):
    schema: tuple[ColumnSchema, ...]
    trees: list[Tree] = field(default_factory=list)

    def __post_init__(self):
        self._forest = None

    def predict_proba(self, X) -> np.ndarray:
        X = self._matrix(X)
        if self._forest is None:
            self._forest = CompiledForest(self.trees)
        return np.clip(self._forest.predict_sum(X) / len(self.trees), 0.0, 1.0)


def fit_random_forest(X: np.ndarray, y: np.ndarray, schema, n_trees: int = 100, max_depth: int = 12,
                      min_leaf: int = 1, mtry: int | None = None, bootstrap: bool = True,
                      seed: int = 0) -> RandomForestModel:
    schema = tuple(schema)
    p = X.shape[1]
    categorical = np.array([c.is_categorical for c in schema])
    mtry = mtry or max(1, int(np.floor(np.sqrt(p))))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        rows = rng.integers(0, len(y), len(y)) if bootstrap else np.arange(len(y))
        trees.append(grow_tree(X[rows], y[rows], range(p), categorical, criterion="gini", max_depth=max_depth,
                               min_leaf=min_leaf, mtry=mtry, rng=rng, n_classes=2))
    return RandomForestModel(schema, trees)


def fit_baseline(train: DetectionDataset, kind: str, seed: int = 0, **options):
    """Fit a ``"logistic"`` or ``"random_forest"`` baseline on the train part."""
    if train.is_test is not None:
        X, y = train.part("train")
    else:
        X, y = train.data.values, train.labels
    if len(np.unique(y)) < 2:
        raise ModelError("training data must contain both real and synthetic rows")
    if kind == "logistic":
        return fit_logistic(X, y.astype(float), train.data.schema, **options)
    if kind == "random_forest":
        return fit_random_forest(X, y, train.data.schema, seed=seed, **options)
    raise DataError(f"unknown baseline kind {kind!r}")
