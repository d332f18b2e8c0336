"""CART growing on encoded matrices with native categorical splits.

``criterion="mse"`` fits a numeric target by variance reduction,
``criterion="gini"`` fits an integer-coded class target by Gini reduction.
Leaf values are the target mean (mse), the share of class 1 (binary gini) or
the majority class (multiclass gini). Covers are row counts.
"""
from __future__ import annotations

import numpy as np

from .trees import LEAF, Tree

_MAX_ORDERINGS = 8


def _impurity(stats: np.ndarray, n: np.ndarray, criterion: str) -> np.ndarray:
    # stats: (..., 2) [sum, sumsq] for mse or (..., K) class counts for gini
    with np.errstate(divide="ignore", invalid="ignore"):
        if criterion == "mse":
            imp = stats[..., 1] - np.where(n > 0, stats[..., 0] ** 2 / n, 0.0)
        else:
            imp = n - np.where(n > 0, (stats ** 2).sum(axis=-1) / n, 0.0)
    return imp


def _target_stats(y: np.ndarray, criterion: str, n_classes: int) -> np.ndarray:
    if criterion == "mse":
        return np.column_stack([y, y * y])
    onehot = np.zeros((len(y), n_classes))
    onehot[np.arange(len(y)), y.astype(np.int64)] = 1.0
    return onehot


class _Grower:
    def __init__(self, X, y, features, categorical, criterion, max_depth, min_leaf, mtry, rng, n_classes):
        self.X = X
        self.y = y
        self.features = list(features)
        self.categorical = categorical
        self.criterion = criterion
        self.max_depth = max_depth
        self.min_leaf = max(1, int(min_leaf))
        self.mtry = mtry
        self.rng = rng
        self.n_classes = n_classes
        self.stats = _target_stats(y, criterion, n_classes)
        self.nodes = []

    def leaf_value(self, idx):
        if self.criterion == "mse":
            return float(self.y[idx].mean())
        counts = np.bincount(self.y[idx].astype(np.int64), minlength=self.n_classes)
        if self.n_classes == 2:
            return float(counts[1] / counts.sum())
        return float(np.argmax(counts))

    def best_split(self, idx):
        feats = self.features
        if self.mtry is not None and self.mtry < len(feats):
            feats = sorted(self.rng.choice(feats, self.mtry, replace=False).tolist())
        n = len(idx)
        S = self.stats[idx]
        parent = _impurity(S.sum(axis=0), np.float64(n), self.criterion)
        best = (1e-12 * max(1.0, abs(parent)), None)
        for f in feats:
            x = self.X[idx, f]
            if self.categorical[f]:
                cand = self._categorical(x, S, parent)
            else:
                cand = self._numeric(x, S, parent)
            if cand is not None and cand[0] > best[0]:
                best = (cand[0], (f,) + cand[1:])
        return best[1]

    def _numeric(self, x, S, parent):
        order = np.argsort(x, kind="stable")
        xs = x[order]
        n = len(xs)
        cum = np.cumsum(S[order], axis=0)
        i = np.arange(1, n)
        ok = (xs[1:] > xs[:-1]) & (i >= self.min_leaf) & (n - i >= self.min_leaf)
        if not ok.any():
            return None
        left = cum[:-1]
        right = cum[-1] - left
        gain = parent - _impurity(left, i.astype(float), self.criterion) - _impurity(right, (n - i).astype(float), self.criterion)
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        lo, hi = xs[k], xs[k + 1]
        thr = lo + (hi - lo) / 2
        if not thr > lo:
            thr = hi
        return float(gain[k]), thr, None

    def _categorical(self, x, S, parent):
        codes = x.astype(np.int64)
        cats, inv = np.unique(codes, return_inverse=True)
        if len(cats) < 2:
            return None
        agg = np.zeros((len(cats), S.shape[1]))
        np.add.at(agg, inv, S)
        cnt = np.bincount(inv, minlength=len(cats)).astype(float)
        if self.criterion == "mse":
            keys = [agg[:, 0] / cnt]
        elif self.n_classes == 2:
            keys = [agg[:, 1] / cnt]
        else:
            top = np.argsort(-agg.sum(axis=0), kind="stable")[:_MAX_ORDERINGS]
            keys = [agg[:, c] / cnt for c in top]
        best = None
        total = agg.sum(axis=0)
        for key in keys:
            order = np.argsort(key, kind="stable")
            cl = np.cumsum(agg[order], axis=0)[:-1]
            nl = np.cumsum(cnt[order])[:-1]
            nr = cnt.sum() - nl
            ok = (nl >= self.min_leaf) & (nr >= self.min_leaf)
            if not ok.any():
                continue
            gain = parent - _impurity(cl, nl, self.criterion) - _impurity(total - cl, nr, self.criterion)
            gain = np.where(ok, gain, -np.inf)
            k = int(np.argmax(gain))
            if best is None or gain[k] > best[0]:
                left = frozenset(int(c) for c in cats[order[:k + 1]])
                best = (float(gain[k]), np.nan, left)
        return best

    def grow(self, idx, depth):
        k = len(self.nodes)
        self.nodes.append(None)
        split = None
        if depth < self.max_depth and len(idx) >= 2 * self.min_leaf:
            split = self.best_split(idx)
        if split is None:
            self.nodes[k] = [LEAF, np.nan, -1, -1, True, self.leaf_value(idx), float(len(idx)), None]
            return k
        f, thr, cats = split
        x = self.X[idx, f]
        go_left = np.isin(x.astype(np.int64), list(cats)) if cats is not None else x < thr
        n_left = int(go_left.sum())
        li = self.grow(idx[go_left], depth + 1)
        ri = self.grow(idx[~go_left], depth + 1)
        self.nodes[k] = [f, thr, li, ri, n_left >= len(idx) - n_left, 0.0, float(len(idx)), cats]
        return k


def grow_tree(X: np.ndarray, y: np.ndarray, features, categorical: np.ndarray, *,
              criterion: str = "mse", max_depth: int = 8, min_leaf: int = 1,
              mtry: int | None = None, rng: np.random.Generator | None = None,
              n_classes: int | None = None) -> Tree:
    """Grow one CART tree on ``X[:, features]`` predicting ``y``."""
    if criterion not in ("mse", "gini"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if criterion == "gini" and n_classes is None:
        n_classes = int(y.max()) + 1 if len(y) else 1
    g = _Grower(X, np.asarray(y, dtype=float), features, np.asarray(categorical, dtype=bool), criterion,
                max_depth, min_leaf, mtry, rng or np.random.default_rng(0), n_classes or 0)
    g.grow(np.arange(X.shape[0]), 0)
    cols = list(zip(*g.nodes))
    return Tree(np.array(cols[0]), np.array(cols[1], dtype=float), np.array(cols[2]), np.array(cols[3]),
                np.array(cols[4]), np.array(cols[5], dtype=float), np.array(cols[6], dtype=float), list(cols[7]))
