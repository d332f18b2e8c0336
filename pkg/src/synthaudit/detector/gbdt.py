"""Second-order gradient boosting of binary trees for the detection task.

Histogram split finding on pre-binned features, native subset splits for
categorical features (categories ordered by their optimal leaf weight), L1/L2
regularised Newton leaf values, row and column subsampling and early stopping
on a stratified 10% slice of the training data.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from numba import njit

from ..dataset import ColumnSchema, DetectionDataset, TabularDataset, schema_fingerprint
from ..errors import DataError, ModelError, SchemaMismatchError
from ..trees import LEAF, CompiledForest, Tree
from .metrics import log_loss_from_raw, logit, sigmoid

FORMAT_VERSION = 1


@dataclass
class TrainConfig:
    n_trees: int = 300
    max_depth: int = 6
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    reg_alpha: float = 0.0
    reg_lambda: float = 1.0
    subsample: float = 1.0
    colsample: float = 1.0
    early_stopping_rounds: int = 20
    min_split_gain: float = 0.0
    max_bins: int = 255
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_trees < 0 or self.max_depth < 1 or self.early_stopping_rounds < 0:
            raise DataError("n_trees and early_stopping_rounds must be >= 0, max_depth >= 1")
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")
        if self.min_child_weight < 0 or self.reg_alpha < 0 or self.reg_lambda < 0 or self.min_split_gain < 0:
            raise DataError("regularisation parameters must be non-negative")
        if not (0 < self.subsample <= 1 and 0 < self.colsample <= 1):
            raise DataError("subsample rates must lie in (0, 1]")
        if self.max_bins < 2:
            raise DataError("max_bins must be at least 2")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


@dataclass(eq=False)
class TreeEnsembleModel:
    """Additive tree ensemble; ``C(x) = sigmoid(base_score + sum of tree outputs)``."""

    trees: list[Tree]
    base_score: float
    schema: tuple[ColumnSchema, ...] | None = None
    config: TrainConfig | None = None
    seed: int = 0
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        self._forest = None

    @property
    def fingerprint(self) -> str | None:
        return None if self.schema is None else schema_fingerprint(self.schema)

    @property
    def feature_names(self) -> list[str] | None:
        return None if self.schema is None else [c.name for c in self.schema]

    @property
    def forest(self) -> CompiledForest:
        if self._forest is None:
            self._forest = CompiledForest(self.trees)
        return self._forest

    def _matrix(self, X) -> np.ndarray:
        if isinstance(X, TabularDataset):
            if self.schema is not None and X.fingerprint() != self.fingerprint:
                raise SchemaMismatchError("dataset schema does not match the model's schema fingerprint")
            return X.values
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if self.schema is not None and X.shape[1] != len(self.schema):
            raise SchemaMismatchError(f"expected {len(self.schema)} columns, got {X.shape[1]}")
        return X

    def predict_raw(self, X) -> np.ndarray:
        X = self._matrix(X)
        return self.base_score + self.forest.predict_sum(X)

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.predict_raw(X))

    def to_dict(self) -> dict:
        return {
            "format": "synthaudit.tree_ensemble",
            "version": FORMAT_VERSION,
            "base_score": self.base_score,
            "schema": None if self.schema is None else [c.to_dict() for c in self.schema],
            "schema_fingerprint": self.fingerprint,
            "config": None if self.config is None else asdict(self.config),
            "seed": self.seed,
            "history": self.history,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeEnsembleModel":
        if d.get("format") != "synthaudit.tree_ensemble":
            raise DataError("not a tree ensemble dump")
        schema = None if d["schema"] is None else tuple(ColumnSchema.from_dict(c) for c in d["schema"])
        model = cls(
            [Tree.from_dict(t) for t in d["trees"]],
            float(d["base_score"]),
            schema,
            None if d["config"] is None else TrainConfig.from_dict(d["config"]),
            int(d["seed"]),
            d.get("history", {}),
        )
        if schema is not None and d.get("schema_fingerprint") not in (None, model.fingerprint):
            raise DataError("schema fingerprint in dump does not match its schema")
        return model

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "TreeEnsembleModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def predict_proba(model, rows) -> np.ndarray:
    return model.predict_proba(rows)


# --- binning ----------------------------------------------------------------

class _Binner:
    def __init__(self, X: np.ndarray, categorical: np.ndarray, n_categories: np.ndarray, max_bins: int):
        self.edges = []
        self.n_bins = []
        for f in range(X.shape[1]):
            if categorical[f]:
                self.edges.append(None)
                self.n_bins.append(int(n_categories[f]) + 1)  # last bin: unknown code
                continue
            u = np.unique(X[:, f])
            if len(u) > max_bins:
                qs = np.quantile(X[:, f], np.linspace(0, 1, max_bins + 1)[1:-1], method="inverted_cdf")
                cut = np.unique(qs)
                pos = np.searchsorted(u, cut, side="right")
                keep = pos < len(u)
                lo, hi = cut[keep], u[pos[keep]]
            else:
                lo, hi = u[:-1], u[1:]
            edges = lo + (hi - lo) / 2
            edges = np.where(edges > lo, edges, hi)
            self.edges.append(edges)
            self.n_bins.append(len(edges) + 1)
        self.offsets = np.concatenate([[0], np.cumsum(self.n_bins)]).astype(np.int64)
        self.categorical = categorical

    def transform(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape, dtype=np.int64)
        for f, edges in enumerate(self.edges):
            if edges is None:
                codes = X[:, f].astype(np.int64)
                out[:, f] = np.where(codes < 0, self.n_bins[f] - 1, codes)
            else:
                out[:, f] = np.searchsorted(edges, X[:, f], side="right")
        return out + self.offsets[:-1]


# --- tree growing -----------------------------------------------------------

def _soft(G, alpha):
    if alpha == 0:
        return G
    return np.sign(G) * np.maximum(np.abs(G) - alpha, 0.0)


def _score(G, H, alpha, lam):
    with np.errstate(divide="ignore", invalid="ignore"):
        s = _soft(G, alpha) ** 2 / (H + lam)
    return np.where(H + lam > 0, s, 0.0)


@njit(cache=True)
def _hist(binned, rows, g, h, total_bins):
    G = np.zeros(total_bins)
    H = np.zeros(total_bins)
    C = np.zeros(total_bins, dtype=np.int64)
    for r in rows:
        gr, hr = g[r], h[r]
        for j in range(binned.shape[1]):
            b = binned[r, j]
            G[b] += gr
            H[b] += hr
            C[b] += 1
    return G, H, C


@njit(cache=True)
def _score1(G, H, alpha, lam):
    if H + lam <= 0:
        return 0.0
    if alpha > 0:
        G = np.sign(G) * max(abs(G) - alpha, 0.0)
    return G * G / (H + lam)


@njit(cache=True)
def _numeric_splits(G, H, C, offsets, features, Gt, Ht, Ct, alpha, lam, mcw, parent):
    """Best (gain, bin) per numeric feature; bin -1 when no admissible split."""
    out = np.full((offsets.shape[0] - 1, 2), -1.0)
    for f in features:
        GL, HL, CL = 0.0, 0.0, 0
        best, best_k = -np.inf, -1
        for k in range(offsets[f], offsets[f + 1] - 1):
            GL += G[k]
            HL += H[k]
            CL += C[k]
            GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
            if CL < 1 or CR < 1 or HL < mcw or HR < mcw:
                continue
            gain = 0.5 * (_score1(GL, HL, alpha, lam) + _score1(GR, HR, alpha, lam) - parent)
            if gain > best:
                best, best_k = gain, k - offsets[f]
        out[f, 0] = best
        out[f, 1] = best_k
    return out


@njit(cache=True)
def _categorical_split(G, H, C, Gt, Ht, Ct, alpha, lam, mcw, parent):
    """Best prefix of the present categories ordered by G / (H + lambda); the last bin is the unknown code."""
    present = np.flatnonzero(C > 0)
    if present.shape[0] < 2:
        return -np.inf, -1, present
    unknown = C.shape[0] - 1
    ratio = G[present] / (H[present] + lam + 1e-300)
    order = present[np.argsort(ratio, kind="mergesort")]
    n_real = 0
    for b in order:
        n_real += b != unknown
    GL, HL, CL, real_left = 0.0, 0.0, 0, 0
    best, best_k = -np.inf, -1
    for k in range(order.shape[0] - 1):
        b = order[k]
        GL += G[b]
        HL += H[b]
        CL += C[b]
        real_left += b != unknown
        GR, HR, CR = Gt - GL, Ht - HL, Ct - CL
        if real_left < 1 or n_real - real_left < 1 or CL < 1 or CR < 1 or HL < mcw or HR < mcw:
            continue
        gain = 0.5 * (_score1(GL, HL, alpha, lam) + _score1(GR, HR, alpha, lam) - parent)
        if gain > best:
            best, best_k = gain, k
    return best, best_k, order


class _TreeBuilder:
    def __init__(self, binned, binner: _Binner, g, h, config: TrainConfig, features):
        self.binned = binned
        self.binner = binner
        self.g = g
        self.h = h
        self.cfg = config
        self.features = features
        self.numeric = np.array([f for f in features if not binner.categorical[f]], dtype=np.int64)
        self.total_bins = int(binner.offsets[-1])
        self.nodes = []
        self.leaf_rows = []

    def hist(self, rows):
        return _hist(self.binned, rows, self.g, self.h, self.total_bins)

    def leaf_value(self, G, H):
        lam = self.cfg.reg_lambda
        if H + lam <= 0:
            return 0.0
        return float(-_soft(G, self.cfg.reg_alpha) / (H + lam) * self.cfg.learning_rate)

    def find_split(self, hist, Gt, Ht, Ct):
        cfg = self.cfg
        G, H, C = hist
        parent = float(_score(np.float64(Gt), np.float64(Ht), cfg.reg_alpha, cfg.reg_lambda))
        best_gain, best = 1e-12 + cfg.min_split_gain, None
        mcw = cfg.min_child_weight
        numeric = _numeric_splits(G, H, C, self.binner.offsets, self.numeric, Gt, Ht, Ct, cfg.reg_alpha,
                                  cfg.reg_lambda, mcw, parent)
        for f in self.features:
            s, e = self.binner.offsets[f], self.binner.offsets[f + 1]
            if not self.binner.categorical[f]:
                gain, k = numeric[f]
                if k >= 0 and gain > best_gain:
                    CL = C[s:s + int(k) + 1].sum()
                    best_gain = float(gain)
                    best = (f, float(self.binner.edges[f][int(k)]), None, bool(CL >= Ct - CL), int(s + k))
                continue
            gain, k, order = _categorical_split(G[s:e], H[s:e], C[s:e], Gt, Ht, Ct, cfg.reg_alpha, cfg.reg_lambda,
                                                mcw, parent)
            if k >= 0 and gain > best_gain:
                best_gain = gain
                unknown_bin = e - s - 1
                left_bins = order[:k + 1]
                CL = C[s:e][left_bins].sum()
                unknown_present = C[e - 1] > 0
                default_left = bool(unknown_bin in left_bins) if unknown_present else bool(CL >= Ct - CL)
                cats = frozenset(int(b) for b in left_bins if b != unknown_bin)
                best = (f, np.nan, cats, default_left, set(int(b) + int(s) for b in left_bins))
        return best

    def grow(self, rows, depth, hist):
        G, H, C = hist
        f0 = self.features[0]
        s, e = self.binner.offsets[f0], self.binner.offsets[f0 + 1]
        Gt, Ht, Ct = G[s:e].sum(), H[s:e].sum(), C[s:e].sum()
        k = len(self.nodes)
        self.nodes.append(None)
        split = None
        if depth < self.cfg.max_depth and len(rows) >= 2:
            split = self.find_split(hist, Gt, Ht, Ct)
        if split is None:
            value = self.leaf_value(Gt, Ht)
            self.nodes[k] = [LEAF, np.nan, -1, -1, True, value, float(len(rows)), None]
            self.leaf_rows.append((rows, value))
            return k
        f, thr, cats, default_left, rule = split
        b = self.binned[rows, f]
        go_left = np.isin(b, list(rule)) if cats is not None else b <= rule
        lrows, rrows = rows[go_left], rows[~go_left]
        if len(lrows) <= len(rrows):
            hl = self.hist(lrows)
            hr = tuple(a - c for a, c in zip(hist, hl))
        else:
            hr = self.hist(rrows)
            hl = tuple(a - c for a, c in zip(hist, hr))
        li = self.grow(lrows, depth + 1, hl)
        ri = self.grow(rrows, depth + 1, hr)
        self.nodes[k] = [f, thr, li, ri, default_left, 0.0, float(len(rows)), cats]
        return k

    def build(self, rows) -> Tree:
        self.grow(rows, 0, self.hist(rows))
        cols = list(zip(*self.nodes))
        return Tree(np.array(cols[0]), np.array(cols[1], dtype=float), np.array(cols[2]), np.array(cols[3]),
                    np.array(cols[4]), np.array(cols[5], dtype=float), np.array(cols[6], dtype=float), list(cols[7]))


def _stratified_holdout(y: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    hold = np.zeros(len(y), dtype=bool)
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        k = min(max(int(round(fraction * len(idx))), 1), len(idx) - 1)
        if k > 0:
            hold[rng.permutation(idx)[:k]] = True
    return hold


def fit_arrays(X: np.ndarray, y: np.ndarray, config: TrainConfig, schema=None,
               categorical: np.ndarray | None = None, n_categories: np.ndarray | None = None) -> TreeEnsembleModel:
    """Boost on raw encoded arrays; ``schema`` (if given) supplies column kinds."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    config.validate()
    if len(np.unique(y)) < 2:
        raise ModelError("training data must contain both real and synthetic rows")
    p = X.shape[1]
    if schema is not None:
        categorical = np.array([c.is_categorical for c in schema])
        n_categories = np.array([len(c.categories) for c in schema])
    if categorical is None:
        categorical = np.zeros(p, dtype=bool)
    if n_categories is None:
        n_categories = np.where(categorical, X.max(axis=0, initial=0).astype(int) + 1, 0)

    rng = np.random.default_rng(config.seed)
    if config.early_stopping_rounds > 0 and config.n_trees > 0:
        hold = _stratified_holdout(y, 0.1, rng)
    else:
        hold = np.zeros(len(y), dtype=bool)
    Xf, yf = X[~hold], y[~hold]
    Xv, yv = X[hold], y[hold]

    prior = float(np.clip(yf.mean(), 1e-6, 1 - 1e-6))
    base = float(logit(prior))
    binner = _Binner(Xf, categorical, n_categories, config.max_bins)
    binned = binner.transform(Xf)

    F = np.full(len(yf), base)
    Fv = np.full(len(yv), base)
    trees: list[Tree] = []
    train_loss = [log_loss_from_raw(yf, F)]
    valid_loss = [log_loss_from_raw(yv, Fv)] if len(yv) else []
    best_iter, best_loss = 0, valid_loss[0] if valid_loss else np.inf
    n = len(yf)
    n_cols = max(1, int(round(config.colsample * p)))
    n_rows = max(1, int(round(config.subsample * n)))
    for it in range(config.n_trees):
        prob = sigmoid(F)
        g = prob - yf
        h = prob * (1 - prob)
        rows = np.arange(n) if n_rows >= n else np.sort(rng.choice(n, n_rows, replace=False))
        feats = list(range(p)) if n_cols >= p else sorted(rng.choice(p, n_cols, replace=False).tolist())
        builder = _TreeBuilder(binned, binner, g, h, config, feats)
        tree = builder.build(rows)
        trees.append(tree)
        if n_rows >= n:
            for leaf_rows, value in builder.leaf_rows:
                F[leaf_rows] += value
        else:
            F += tree.predict(Xf)
        train_loss.append(log_loss_from_raw(yf, F))
        if len(yv):
            Fv += tree.predict(Xv)
            valid_loss.append(log_loss_from_raw(yv, Fv))
            if valid_loss[-1] < best_loss - 1e-12:
                best_loss, best_iter = valid_loss[-1], it + 1
            elif it + 1 - best_iter >= config.early_stopping_rounds:
                break
    if len(yv):
        trees = trees[:best_iter]
        train_loss = train_loss[:best_iter + 1]
        valid_loss = valid_loss[:best_iter + 1]
    history = {"train_loss": train_loss, "valid_loss": valid_loss, "n_trees": len(trees)}
    return TreeEnsembleModel(trees, base, None if schema is None else tuple(schema), config, config.seed, history)


def fit_gbdt(train: DetectionDataset, config: TrainConfig | None = None) -> TreeEnsembleModel:
    """Train the detector on the train part of ``train`` (all rows if unsplit)."""
    config = config or TrainConfig()
    if train.is_test is not None:
        X, y = train.part("train")
    else:
        X, y = train.data.values, train.labels
    return fit_arrays(X, y, config, schema=train.data.schema)
