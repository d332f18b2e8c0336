"""Classification metrics with real (label 1) as the positive class."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from ..errors import DataError

EPS = 1e-15


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logit(p):
    p = np.clip(np.asarray(p, dtype=float), EPS, 1 - EPS)
    return np.log(p) - np.log1p(-p)


def classify(prob: np.ndarray) -> np.ndarray:
    """Hard labels at threshold 0.5; exact ties count as synthetic (0)."""
    return (np.asarray(prob) > 0.5).astype(np.int64)


def log_loss(y: np.ndarray, prob: np.ndarray) -> float:
    p = np.clip(np.asarray(prob, dtype=float), EPS, 1 - EPS)
    y = np.asarray(y, dtype=float)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


def log_loss_from_raw(y: np.ndarray, raw: np.ndarray) -> float:
    """Binary log-loss evaluated from log-odds without clipping."""
    raw = np.asarray(raw, dtype=float)
    # log(1 + exp(-z)) for y=1, log(1 + exp(z)) for y=0
    z = np.where(np.asarray(y) == 1, -raw, raw)
    return float(np.mean(np.logaddexp(0.0, z)))


def accuracy(y: np.ndarray, prob: np.ndarray) -> float:
    return float(np.mean(classify(prob) == np.asarray(y)))


def roc_auc(y: np.ndarray, score: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count one half)."""
    y = np.asarray(y)
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes")
    ranks = rankdata(score)
    return float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


@dataclass
class SplitMetrics:
    n: int
    accuracy: float
    auc: float
    log_loss: float
    fpr: float
    fnr: float
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def compute(cls, y: np.ndarray, prob: np.ndarray) -> "SplitMetrics":
        y = np.asarray(y)
        if len(y) == 0:
            raise DataError("cannot evaluate an empty split")
        pred = classify(prob)
        tp = int(((pred == 1) & (y == 1)).sum())
        fp = int(((pred == 1) & (y == 0)).sum())
        tn = int(((pred == 0) & (y == 0)).sum())
        fn = int(((pred == 0) & (y == 1)).sum())
        return cls(
            n=len(y),
            accuracy=(tp + tn) / len(y),
            auc=roc_auc(y, prob),
            log_loss=log_loss(y, prob),
            fpr=fp / (fp + tn) if fp + tn else float("nan"),
            fnr=fn / (fn + tp) if fn + tp else float("nan"),
            tp=tp, fp=fp, tn=tn, fn=fn,
        )


@dataclass
class MetricsReport:
    """Train and test metrics. FPR is read as a fidelity proxy, FNR as a diversity proxy."""

    train: SplitMetrics
    test: SplitMetrics

    def to_dict(self) -> dict:
        return {"positive_class": "real", "threshold": 0.5, "train": asdict(self.train), "test": asdict(self.test)}


def evaluate(model, d) -> MetricsReport:
    """Metrics of ``model`` on both parts of a split DetectionDataset."""
    if d.is_test is None:
        raise DataError("evaluate needs a dataset with a train/test split")
    Xtr, ytr = d.part("train")
    Xte, yte = d.part("test")
    if len(yte) == 0:
        raise DataError("test split is empty")
    return MetricsReport(SplitMetrics.compute(ytr, model.predict_proba(Xtr)),
                         SplitMetrics.compute(yte, model.predict_proba(Xte)))
