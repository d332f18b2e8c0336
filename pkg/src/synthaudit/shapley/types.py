"""Attribution containers, background sets and value-function settings."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..dataset import TabularDataset
from ..errors import DataError

PROBABILITY = "probability"
LOG_ODDS = "log_odds"
SCALES = (PROBABILITY, LOG_ODDS)


def check_scale(scale: str) -> str:
    if scale not in SCALES:
        raise DataError(f"unknown output scale {scale!r}")
    return scale


def model_output(model, scale: str):
    """Batch output function of ``model`` on the requested scale.

    Plain callables are used as they are and are assumed to already produce
    the requested scale.
    """
    check_scale(scale)
    if hasattr(model, "predict_raw") and scale == LOG_ODDS:
        return model.predict_raw
    if hasattr(model, "predict_proba"):
        if scale == LOG_ODDS:
            raise DataError("model exposes probabilities only, log-odds scale unavailable")
        return model.predict_proba
    if callable(model):
        return lambda X: np.asarray(model(X), dtype=float)
    raise DataError("model must expose predict_proba/predict_raw or be callable")


@dataclass(frozen=True)
class BackgroundSet:
    rows: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if rows.shape[0] == 0:
            raise DataError("background set is empty")
        if w.shape != (rows.shape[0],) or (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise DataError("background weights must be nonnegative, one per row, summing to 1")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @classmethod
    def uniform(cls, rows) -> "BackgroundSet":
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        return cls(rows, np.full(rows.shape[0], 1.0 / max(rows.shape[0], 1)))

    @classmethod
    def sample(cls, data: TabularDataset | np.ndarray, n: int = 100, seed: int = 0) -> "BackgroundSet":
        """``n`` rows drawn without replacement (all rows when fewer exist)."""
        X = data.values if isinstance(data, TabularDataset) else np.asarray(data, dtype=float)
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(X.shape[0], size=min(n, X.shape[0]), replace=False))
        return cls.uniform(X[idx])


@dataclass
class ValueFunctionSpec:
    """How absent features are integrated out.

    ``marginal`` averages over the background set; ``conditional`` averages
    over ``n_imputations`` rows drawn from ``sampler`` given the present
    features.
    """

    mode: str = "marginal"
    sampler: Any = None
    n_imputations: int = 50
    scale: str = PROBABILITY

    def __post_init__(self):
        if self.mode not in ("marginal", "conditional"):
            raise DataError(f"unknown value-function mode {self.mode!r}")
        if self.mode == "conditional" and self.sampler is None:
            raise DataError("conditional mode needs a sampler")
        if self.n_imputations < 1:
            raise DataError("n_imputations must be at least 1")
        check_scale(self.scale)


def _names(names, p: int) -> list[str]:
    return list(names) if names is not None else [f"x{j}" for j in range(p)]


@dataclass
class ShapleyVector:
    values: np.ndarray
    base_value: float
    prediction: float
    scale: str
    feature_names: list[str] = field(default_factory=list)
    engine: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.feature_names = _names(self.feature_names or None, len(self.values))
        check_scale(self.scale)

    @property
    def efficiency_gap(self) -> float:
        return float(self.base_value + self.values.sum() - self.prediction)

    def to_dict(self) -> dict:
        return {
            "engine": self.engine,
            "scale": self.scale,
            "base_value": float(self.base_value),
            "prediction": float(self.prediction),
            "features": self.feature_names,
            "values": [float(v) for v in self.values],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ShapleyVector":
        return cls(np.array(d["values"], dtype=float), d["base_value"], d["prediction"], d["scale"],
                   list(d["features"]), d.get("engine", ""))


@dataclass
class InteractionMatrix:
    """Symmetric main-effect (diagonal) and pairwise (off-diagonal, split evenly) attributions."""

    matrix: np.ndarray
    base_value: float
    prediction: float
    scale: str = LOG_ODDS
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != self.matrix.shape[1]:
            raise DataError("interaction matrix must be square")
        self.feature_names = _names(self.feature_names or None, self.matrix.shape[0])
        check_scale(self.scale)

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.T, rtol=0.0, atol=tol))

    def shapley(self) -> ShapleyVector:
        return ShapleyVector(self.matrix.sum(axis=1), self.base_value, self.prediction, self.scale,
                             self.feature_names, "interactions")

    def terms(self) -> list[tuple[tuple[str, ...], float]]:
        """Degree-1 terms and degree-2 terms (pair counted once as M_ij + M_ji)."""
        p = self.matrix.shape[0]
        out = [((self.feature_names[j],), float(self.matrix[j, j])) for j in range(p)]
        for i in range(p):
            for j in range(i + 1, p):
                out.append(((self.feature_names[i], self.feature_names[j]),
                            float(self.matrix[i, j] + self.matrix[j, i])))
        return out

    def to_dict(self) -> dict:
        return {
            "scale": self.scale,
            "base_value": float(self.base_value),
            "prediction": float(self.prediction),
            "features": self.feature_names,
            "matrix": [[float(v) for v in row] for row in self.matrix],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "InteractionMatrix":
        return cls(np.array(d["matrix"], dtype=float), d["base_value"], d["prediction"], d["scale"],
                   list(d["features"]))


def feature_names_of(model, p: int, names: Sequence[str] | None = None) -> list[str]:
    if names is not None:
        return list(names)
    if getattr(model, "feature_names", None) is not None:
        return list(model.feature_names)
    if getattr(model, "schema", None) is not None:
        return [c.name for c in model.schema]
    return [f"x{j}" for j in range(p)]
