"""Binary decision trees stored as flat node arrays.

Node ``k`` is a leaf when ``feature[k] == -1``. Internal numeric nodes send a
row left when ``x < threshold``; internal categorical nodes send it left when
its category code is in ``left_categories[k]``. Category codes outside the
feature's category list (the "unknown" code) and NaNs follow
``default_left``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import DataError

LEAF = -1


@dataclass(frozen=True)
class Leaf:
    value: float
    cover: float = 1.0


@dataclass(frozen=True)
class Split:
    feature: int
    left: "Leaf | Split"
    right: "Leaf | Split"
    threshold: float = float("nan")
    categories: frozenset[int] | None = None
    default_left: bool = True
    cover: float | None = None


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    default_left: np.ndarray
    value: np.ndarray
    cover: np.ndarray
    left_categories: list = field(default_factory=list)

    def __post_init__(self):
        self.feature = np.asarray(self.feature, dtype=np.int64)
        self.threshold = np.asarray(self.threshold, dtype=np.float64)
        self.left = np.asarray(self.left, dtype=np.int64)
        self.right = np.asarray(self.right, dtype=np.int64)
        self.default_left = np.asarray(self.default_left, dtype=bool)
        self.value = np.asarray(self.value, dtype=np.float64)
        self.cover = np.asarray(self.cover, dtype=np.float64)
        if not self.left_categories:
            self.left_categories = [None] * len(self.feature)
        self.left_categories = [None if c is None else frozenset(int(v) for v in c) for c in self.left_categories]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, k: int) -> bool:
        return self.feature[k] == LEAF

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] != LEAF:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max()) if self.n_nodes else 0

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f != LEAF}

    def goes_left(self, k: int, X: np.ndarray) -> np.ndarray:
        """Routing decision of internal node ``k`` for every row of ``X``."""
        x = X[:, self.feature[k]]
        cats = self.left_categories[k]
        if cats is None:
            out = x < self.threshold[k]
            nan = np.isnan(x)
            if nan.any():
                out[nan] = self.default_left[k]
            return out
        unknown = np.isnan(x) | (x < 0)
        codes = np.where(unknown, -1, x).astype(np.int64)
        out = np.isin(codes, list(cats))
        if unknown.any():
            out[unknown] = self.default_left[k]
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            k, rows = stack.pop()
            if self.feature[k] == LEAF or len(rows) == 0:
                node[rows] = k
                continue
            gl = self.goes_left(k, X[rows])
            stack.append((int(self.left[k]), rows[gl]))
            stack.append((int(self.right[k]), rows[~gl]))
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return CompiledForest([self]).predict_sum(X)

    def expected_value(self) -> float:
        """Cover-weighted mean leaf value."""
        leaves = self.feature == LEAF
        return float(np.sum(self.value[leaves] * self.cover[leaves]) / np.sum(self.cover[leaves]))

    def recompute_covers(self, X: np.ndarray, weights: np.ndarray | None = None) -> "Tree":
        """Copy of this tree whose covers are the weight of ``X`` rows reaching each node."""
        w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
        cover = np.zeros(self.n_nodes)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            k, rows = stack.pop()
            cover[k] = w[rows].sum()
            if self.feature[k] != LEAF:
                gl = self.goes_left(k, X[rows])
                stack.append((int(self.left[k]), rows[gl]))
                stack.append((int(self.right[k]), rows[~gl]))
        return Tree(self.feature, self.threshold, self.left, self.right, self.default_left,
                    self.value, cover, list(self.left_categories))

    # --- construction / serialization ---------------------------------------

    @classmethod
    def from_nodes(cls, root: Leaf | Split) -> "Tree":
        """Flatten a nested Leaf/Split structure (preorder numbering).

        Internal covers default to the sum of their children's covers.
        """
        rows = []

        def visit(node) -> tuple[int, float]:
            k = len(rows)
            rows.append(None)
            if isinstance(node, Leaf):
                if not node.cover > 0:
                    raise DataError("leaf cover must be positive")
                rows[k] = (LEAF, np.nan, -1, -1, True, node.value, node.cover, None)
                return k, node.cover
            li, lc = visit(node.left)
            ri, rc = visit(node.right)
            cover = lc + rc if node.cover is None else node.cover
            cats = None if node.categories is None else frozenset(node.categories)
            rows[k] = (node.feature, node.threshold, li, ri, node.default_left, 0.0, cover, cats)
            return k, cover

        visit(root)
        cols = list(zip(*rows))
        return cls(np.array(cols[0]), np.array(cols[1]), np.array(cols[2]), np.array(cols[3]),
                   np.array(cols[4]), np.array(cols[5]), np.array(cols[6]), list(cols[7]))

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "default_left": self.default_left.tolist(),
            "value": self.value.tolist(),
            "cover": self.cover.tolist(),
            "left_categories": [None if c is None else sorted(c) for c in self.left_categories],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            np.array(d["feature"]),
            np.array([np.nan if t is None else t for t in d["threshold"]], dtype=float),
            np.array(d["left"]), np.array(d["right"]), np.array(d["default_left"]),
            np.array(d["value"], dtype=float), np.array(d["cover"], dtype=float),
            [None if c is None else frozenset(c) for c in d["left_categories"]],
        )


@njit(cache=True)
def _predict_sum(X, roots, children, feature, threshold, default_left, value, is_cat, cat_row, cat_table, width,
                 is_leaf, out):
    # tree-major order keeps one tree's nodes hot; each row still sums its trees in model order
    for t in range(roots.shape[0]):
        for i in range(X.shape[0]):
            node = roots[t]
            while not is_leaf[node]:
                x = X[i, feature[node]]
                if is_cat[node]:
                    if x < 0 or np.isnan(x):
                        go = default_left[node]
                    else:
                        code = np.int64(x)
                        go = code < width and cat_table[cat_row[node] * width + code]
                elif np.isnan(x):
                    go = default_left[node]
                else:
                    go = x < threshold[node]
                node = children[2 * node + (1 if go else 0)]
            out[i] += value[node]


class CompiledForest:
    """All trees of an ensemble concatenated for vectorised traversal.

    Leaves point to themselves, so every row can take exactly ``depth`` steps.
    """

    def __init__(self, trees: Sequence[Tree]):
        self.n_trees = len(trees)
        offsets = np.cumsum([0] + [t.n_nodes for t in trees])
        self.roots = offsets[:-1].astype(np.int64)
        if self.n_trees == 0:
            self.depth = 0
            return
        feat = np.concatenate([t.feature for t in trees])
        n_nodes = len(feat)
        is_leaf = feat == LEAF
        own = np.arange(n_nodes)
        left = np.concatenate([t.left + o for t, o in zip(trees, offsets)])
        right = np.concatenate([t.right + o for t, o in zip(trees, offsets)])
        left = np.where(is_leaf, own, left)
        right = np.where(is_leaf, own, right)
        # children[2k + go_left]
        self.children = np.empty(2 * n_nodes, dtype=np.int64)
        self.children[0::2] = right
        self.children[1::2] = left
        self.is_leaf = is_leaf
        self.feature = np.where(is_leaf, 0, feat)
        self.threshold = np.where(is_leaf, 0.0, np.concatenate([t.threshold for t in trees]))
        self.default_left = np.concatenate([t.default_left for t in trees]).astype(np.int64)
        self.value = np.concatenate([t.value for t in trees])
        cats = [c for t in trees for c in t.left_categories]
        self.has_categorical = any(c is not None for c in cats)
        self.categorical_features = sorted({int(f) for f, c in zip(feat, cats) if c is not None})
        width = max([max(c) + 1 for c in cats if c] + [1])
        self.width = width
        self.cat_row = np.zeros(n_nodes, dtype=np.int64)
        table = [np.zeros(width, dtype=bool)]
        for k, c in enumerate(cats):
            if c is not None:
                row = np.zeros(width, dtype=bool)
                row[list(c)] = True
                self.cat_row[k] = len(table)
                table.append(row)
        self.cat_table = np.array(table).ravel()
        self.is_cat = self.cat_row > 0
        self.depth = max(t.depth() for t in trees)

    def leaves(self, X: np.ndarray) -> np.ndarray:
        """Global leaf index per (row, tree)."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        n, p = X.shape
        node = np.broadcast_to(self.roots, (n, self.n_trees)).copy()
        base = (np.arange(n) * p)[:, None]
        flat = X.ravel()
        special = bool(np.isnan(X).any())
        if self.has_categorical:
            special = special or bool((X[:, self.categorical_features] < 0).any())
        for _ in range(self.depth):
            x = flat[base + self.feature[node]]
            if self.has_categorical:
                is_cat = self.is_cat[node]
                codes = np.where(is_cat & (x >= 0), x, -1).astype(np.int64)
                in_table = (codes >= 0) & (codes < self.width)
                cat_go = self.cat_table[self.cat_row[node] * self.width + np.where(in_table, codes, 0)] & in_table
                go = np.where(is_cat, cat_go, x < self.threshold[node])
                if special:
                    undecided = np.where(is_cat, codes < 0, np.isnan(x))
                    go = np.where(undecided, self.default_left[node].astype(bool), go)
            else:
                go = x < self.threshold[node]
                if special:
                    nan = np.isnan(x)
                    go = np.where(nan, self.default_left[node].astype(bool), go)
            node = self.children[2 * node + go]
        return node

    def predict_sum(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        out = np.zeros(n)
        if self.n_trees == 0 or n == 0:
            return out
        _predict_sum(np.ascontiguousarray(X, dtype=np.float64), self.roots, self.children, self.feature,
                     self.threshold, self.default_left.astype(bool), self.value, self.is_cat, self.cat_row,
                     self.cat_table, self.width, self.is_leaf, out)
        return out
