"""Global feature importance: permutation importance, mean |SHAP| and interaction rankings."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import DetectionDataset
from .detector.metrics import classify, log_loss
from .errors import DataError
from .shapley.types import InteractionMatrix, ShapleyVector

LOSSES = ("log_loss", "one_minus_accuracy")
PERMUTATION_CAVEAT = ("Permutation importance breaks the dependence between the permuted feature and the "
                      "others; with correlated features it evaluates the model off the data manifold and may "
                      "split or hide the importance of redundant copies.")


@dataclass
class ImportanceEntry:
    features: tuple[str, ...]
    mean: float
    sd: float
    values: list[float] = field(default_factory=list)

    @property
    def label(self) -> str:
        return " × ".join(self.features)

    @property
    def se(self) -> float:
        return self.sd / np.sqrt(len(self.values)) if self.values else 0.0

    def to_dict(self) -> dict:
        return {"features": list(self.features), "mean": float(self.mean), "sd": float(self.sd),
                "values": [float(v) for v in self.values]}


@dataclass
class ImportanceReport:
    method: str
    entries: list[ImportanceEntry]
    loss: str | None = None
    notes: list[str] = field(default_factory=list)

    def ranked(self) -> list[ImportanceEntry]:
        return sorted(self.entries, key=lambda e: (-e.mean, e.label))

    def entry(self, *features: str) -> ImportanceEntry:
        for e in self.entries:
            if e.features == tuple(features):
                return e
        raise KeyError(features)

    def means(self) -> dict[str, float]:
        return {e.label: e.mean for e in self.entries}

    def to_dict(self) -> dict:
        out = {"method": self.method}
        if self.loss is not None:
            out["loss"] = self.loss
        out["entries"] = [e.to_dict() for e in self.ranked()]
        if self.notes:
            out["notes"] = list(self.notes)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ImportanceReport":
        entries = [ImportanceEntry(tuple(e["features"]), e["mean"], e["sd"], list(e["values"])) for e in d["entries"]]
        return cls(d["method"], entries, d.get("loss"), list(d.get("notes", [])))


def _sd(values: np.ndarray) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def _loss(name: str, y: np.ndarray, prob: np.ndarray) -> float:
    if name == "log_loss":
        return log_loss(y, prob)
    return float(1.0 - np.mean(classify(prob) == y))


def permutation_importance(model, data, y=None, loss: str = "log_loss", repeats: int = 10, seed: int = 0,
                           feature_names: Sequence[str] | None = None, part: str = "test") -> ImportanceReport:
    """Mean loss increase over ``repeats`` permutations of each column.

    ``data`` is either a split DetectionDataset (the ``part`` rows are used,
    test by default) or a matrix with labels ``y``. Permutation ``r`` of
    column ``j`` is drawn from a generator seeded with ``(seed, j, r)``, so
    runs with more repeats extend runs with fewer.
    """
    if loss not in LOSSES:
        raise DataError(f"unknown loss {loss!r}")
    if repeats < 1:
        raise DataError("repeats must be at least 1")
    if isinstance(data, DetectionDataset):
        X, y = data.part(part) if data.is_test is not None else (data.data.values, data.labels)
        names = data.data.names
    else:
        X = np.atleast_2d(np.asarray(data, dtype=float))
        names = None
    names = list(feature_names or names or [f"x{j}" for j in range(X.shape[1])])
    y = np.asarray(y)
    if X.shape[0] < 2:
        raise DataError("permutation importance needs at least two rows")
    base = _loss(loss, y, model.predict_proba(X))
    entries = []
    for j, name in enumerate(names):
        diffs = np.empty(repeats)
        for r in range(repeats):
            perm = np.random.default_rng([seed, j, r]).permutation(X.shape[0])
            Xp = X.copy()
            Xp[:, j] = X[perm, j]
            diffs[r] = _loss(loss, y, model.predict_proba(Xp)) - base
        entries.append(ImportanceEntry((name,), float(diffs.mean()), _sd(diffs), diffs.tolist()))
    return ImportanceReport("PFI", entries, loss, [PERMUTATION_CAVEAT])


def _as_matrix(vectors) -> tuple[np.ndarray, list[str]]:
    if isinstance(vectors, np.ndarray):
        if vectors.ndim != 2:
            raise DataError("expected an n x p attribution matrix")
        return vectors, [f"x{j}" for j in range(vectors.shape[1])]
    vectors = list(vectors)
    if not vectors:
        raise DataError("no attribution vectors given")
    names = vectors[0].feature_names
    if any(v.feature_names != names for v in vectors):
        raise DataError("attribution vectors do not share a feature order")
    return np.array([v.values for v in vectors]), list(names)


def shap_importance(vectors: Sequence[ShapleyVector] | np.ndarray,
                    feature_names: Sequence[str] | None = None) -> ImportanceReport:
    """Mean absolute attribution per feature (sd over instances)."""
    phi, names = _as_matrix(vectors)
    if phi.shape[0] == 0:
        raise DataError("no attribution vectors given")
    names = list(feature_names or names)
    a = np.abs(phi)
    entries = [ImportanceEntry((n,), float(a[:, j].mean()), _sd(a[:, j]), []) for j, n in enumerate(names)]
    return ImportanceReport("mean_abs_shap", entries)


def interaction_importance(matrices: Sequence[InteractionMatrix] | np.ndarray, top_k: int = 20,
                           feature_names: Sequence[str] | None = None, tol: float = 1e-9) -> ImportanceReport:
    """Mean absolute degree-1 (diagonal) and degree-2 (M_ij + M_ji) terms, top_k by mean."""
    if isinstance(matrices, np.ndarray):
        M = matrices
        names = [f"x{j}" for j in range(M.shape[-1])]
    else:
        matrices = list(matrices)
        if not matrices:
            raise DataError("no interaction matrices given")
        names = matrices[0].feature_names
        M = np.array([m.matrix for m in matrices])
    if M.ndim != 3 or M.shape[0] == 0 or M.shape[1] != M.shape[2]:
        raise DataError("expected a nonempty n x p x p interaction array")
    if not np.allclose(M, M.transpose(0, 2, 1), rtol=0.0, atol=tol):
        raise DataError("interaction matrices must be symmetric")
    names = list(feature_names or names)
    p = M.shape[1]
    entries = []
    for i in range(p):
        a = np.abs(M[:, i, i])
        entries.append(ImportanceEntry((names[i],), float(a.mean()), _sd(a), []))
    for i in range(p):
        for j in range(i + 1, p):
            a = np.abs(M[:, i, j] + M[:, j, i])
            entries.append(ImportanceEntry((names[i], names[j]), float(a.mean()), _sd(a), []))
    report = ImportanceReport("interaction", entries)
    report.entries = report.ranked()[:top_k]
    return report


def combine_reports(reports: Sequence[ImportanceReport]) -> ImportanceReport:
    """Aggregate replications: per-entry means become the values, sd across replications."""
    reports = list(reports)
    if not reports:
        raise DataError("no reports to combine")
    method, loss = reports[0].method, reports[0].loss
    if any(r.method != method for r in reports):
        raise DataError("cannot combine reports of different methods")
    keys = []
    for r in reports:
        for e in r.entries:
            if e.features not in keys:
                keys.append(e.features)
    entries = []
    for k in keys:
        vals = []
        for r in reports:
            try:
                vals.append(r.entry(*k).mean)
            except KeyError:
                pass
        v = np.array(vals)
        entries.append(ImportanceEntry(k, float(v.mean()), _sd(v), v.tolist()))
    return ImportanceReport(method, entries, loss, list(reports[0].notes))
