"""Conditional imputation by significance-gated recursive partitioning.

For a coalition S one tree is grown with the features in S as covariates and
the remaining features as a joint response. A node is split only if some
covariate is associated with the response after Bonferroni adjustment
(Pearson test for numeric pairs, one-way ANOVA when one side is categorical,
chi-square for categorical pairs). The split point of the selected covariate
minimises the pooled within-child sum of squares of the standardised,
one-hot encoded response. Drawing for an instance samples training rows from
the leaf that contains the instance's values on S.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..dataset import TabularDataset
from ..errors import DataError
from .exact import ints_from_masks


@dataclass(frozen=True)
class ConditionalConfig:
    alpha: float = 0.05
    max_depth: int = 4
    min_cell_rows: int = 20
    max_rows: int | None = None
    seed: int = 0


@dataclass
class _Cell:
    rows: np.ndarray
    feature: int = -1
    threshold: float = np.nan
    left_codes: frozenset | None = None
    right_codes: frozenset | None = None
    left: "_Cell | None" = None
    right: "_Cell | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


def _pearson_p(x: np.ndarray, y: np.ndarray) -> float:
    m = len(x)
    sx, sy = x.std(), y.std()
    if m < 3 or sx == 0 or sy == 0:
        return 1.0
    r = float(np.clip(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy), -1.0, 1.0))
    if abs(r) >= 1.0:
        return 0.0
    t = r * np.sqrt((m - 2) / (1 - r * r))
    return float(2 * stats.t.sf(abs(t), m - 2))


def _anova_p(values: np.ndarray, groups: np.ndarray) -> float:
    levels, g = np.unique(groups, return_inverse=True)
    k, m = len(levels), len(values)
    if k < 2 or m <= k:
        return 1.0
    counts = np.bincount(g)
    means = np.bincount(g, weights=values) / counts
    grand = values.mean()
    ssb = float(np.sum(counts * (means - grand) ** 2))
    ssw = float(np.sum((values - means[g]) ** 2))
    if ssw <= 0:
        return 0.0 if ssb > 0 else 1.0
    F = (ssb / (k - 1)) / (ssw / (m - k))
    return float(stats.f.sf(F, k - 1, m - k))


def _chi2_p(a: np.ndarray, b: np.ndarray) -> float:
    la, ia = np.unique(a, return_inverse=True)
    lb, ib = np.unique(b, return_inverse=True)
    if len(la) < 2 or len(lb) < 2:
        return 1.0
    table = np.zeros((len(la), len(lb)))
    np.add.at(table, (ia, ib), 1.0)
    expected = table.sum(1, keepdims=True) * table.sum(0, keepdims=True) / table.sum()
    chi2 = float(np.sum((table - expected) ** 2 / expected))
    return float(stats.chi2.sf(chi2, (len(la) - 1) * (len(lb) - 1)))


def _sse_prefix(sums: np.ndarray, sq: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Within-group SSE for left = first k units, right = rest, for every k."""
    cs, cq, cn = np.cumsum(sums, axis=0), np.cumsum(sq), np.cumsum(counts)
    ts, tq, tn = cs[-1], cq[-1], cn[-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        left = cq - np.sum(cs ** 2, axis=1) / cn
        right = (tq - cq) - np.sum((ts - cs) ** 2, axis=1) / (tn - cn)
    return left + right


class ConditionalSampler:
    """Row sampler for x_{not S} given x_S, one partition tree per coalition."""

    def __init__(self, data: np.ndarray, categorical: np.ndarray, config: ConditionalConfig):
        self.data = np.asarray(data, dtype=float)
        self.categorical = np.asarray(categorical, dtype=bool)
        self.config = config
        self.n, self.p = self.data.shape
        sd = self.data.std(axis=0)
        self._scaled = (self.data - self.data.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
        self._trees: dict[int, _Cell] = {}

    # --- fitting -------------------------------------------------------------

    def _response(self, rows: np.ndarray, resp: list[int]) -> np.ndarray:
        blocks = []
        for k in resp:
            if self.categorical[k]:
                codes = self.data[rows, k]
                levels = np.unique(codes)
                if len(levels) > 1:
                    blocks.append((codes[:, None] == levels[None, :]).astype(float))
            else:
                blocks.append(self._scaled[rows, k][:, None])
        return np.hstack(blocks) if blocks else np.zeros((len(rows), 0))

    def _pvalue(self, rows: np.ndarray, j: int, k: int) -> float:
        x, y = self.data[rows, j], self.data[rows, k]
        cj, ck = self.categorical[j], self.categorical[k]
        if cj and ck:
            return _chi2_p(x, y)
        if cj:
            return _anova_p(y, x)
        if ck:
            return _anova_p(x, y)
        return _pearson_p(x, y)

    def _best_split(self, rows: np.ndarray, j: int, Y: np.ndarray):
        mcr = self.config.min_cell_rows
        x = self.data[rows, j]
        sq = np.sum(Y ** 2, axis=1)
        if self.categorical[j]:
            levels, g = np.unique(x, return_inverse=True)
            if len(levels) < 2:
                return None
            counts = np.bincount(g).astype(float)
            sums = np.zeros((len(levels), Y.shape[1]))
            np.add.at(sums, g, Y)
            qs = np.bincount(g, weights=sq)
            means = sums / counts[:, None]
            centred = (means - (sums.sum(0) / counts.sum())) * np.sqrt(counts)[:, None]
            if Y.shape[1] and np.any(centred):
                direction = np.linalg.svd(centred, full_matrices=False)[2][0]
                key = means @ direction
            else:
                key = np.zeros(len(levels))
            order = np.lexsort((levels, key))
            sse = _sse_prefix(sums[order], qs[order], counts[order])[:-1]
            cn = np.cumsum(counts[order])[:-1]
            ok = (cn >= mcr) & (len(rows) - cn >= mcr)
            if not ok.any():
                return None
            k = int(np.argmin(np.where(ok, sse, np.inf)))
            return ("cat", frozenset(levels[order[:k + 1]].astype(int).tolist()))
        order = np.argsort(x, kind="stable")
        xs = x[order]
        sse = _sse_prefix(Y[order], sq[order], np.ones(len(rows)))[:-1]
        cn = np.arange(1, len(rows))
        ok = (cn >= mcr) & (len(rows) - cn >= mcr) & (xs[:-1] < xs[1:])
        if not ok.any():
            return None
        k = int(np.argmin(np.where(ok, sse, np.inf)))
        return ("num", 0.5 * (xs[k] + xs[k + 1]))

    def _grow(self, rows: np.ndarray, cov: list[int], resp: list[int], depth: int) -> _Cell:
        cell = _Cell(rows)
        mcr = self.config.min_cell_rows
        if depth >= self.config.max_depth or len(rows) < 2 * mcr or not cov or not resp:
            return cell
        n_tests = len(cov) * len(resp)
        best_p, best_j = 1.0, -1
        for j in cov:
            pj = min(self._pvalue(rows, j, k) for k in resp)
            if pj < best_p:
                best_p, best_j = pj, j
        if best_j < 0 or min(1.0, best_p * n_tests) >= self.config.alpha:
            return cell
        split = self._best_split(rows, best_j, self._response(rows, resp))
        if split is None:
            return cell
        x = self.data[rows, best_j]
        if split[0] == "cat":
            go = np.isin(x.astype(int), list(split[1]))
            cell.left_codes = split[1]
            cell.right_codes = frozenset(np.unique(x[~go]).astype(int).tolist())
        else:
            go = x < split[1]
            cell.threshold = split[1]
        cell.feature = best_j
        cell.left = self._grow(rows[go], cov, resp, depth + 1)
        cell.right = self._grow(rows[~go], cov, resp, depth + 1)
        return cell

    def tree(self, mask: np.ndarray) -> _Cell:
        mask = np.asarray(mask, dtype=bool)
        key = int(ints_from_masks(mask[None, :])[0])
        if key not in self._trees:
            cov = [int(j) for j in np.flatnonzero(mask)]
            resp = [int(j) for j in np.flatnonzero(~mask)]
            self._trees[key] = self._grow(np.arange(self.n), cov, resp, 0)
        return self._trees[key]

    # --- sampling ------------------------------------------------------------

    def cell_rows(self, mask: np.ndarray, x: np.ndarray) -> np.ndarray:
        node = self.tree(mask)
        while not node.is_leaf:
            v = x[node.feature]
            if node.left_codes is not None:
                code = int(v)
                if code in node.left_codes:
                    node = node.left
                elif code in node.right_codes:
                    node = node.right
                else:   # category unseen in this cell follows the larger child
                    node = node.left if len(node.left.rows) >= len(node.right.rows) else node.right
            else:
                node = node.left if v < node.threshold else node.right
        if len(node.rows) < self.config.min_cell_rows:
            return np.arange(self.n)
        return node.rows

    def draw(self, mask, x, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` training rows (with replacement) from the cell of ``x`` under coalition ``mask``."""
        rows = self.cell_rows(np.asarray(mask, dtype=bool), np.asarray(x, dtype=float))
        return self.data[rng.choice(rows, size=n, replace=True)]


def fit_conditional_sampler(data: TabularDataset | np.ndarray, config: ConditionalConfig | None = None,
                            categorical=None) -> ConditionalSampler:
    config = config or ConditionalConfig()
    if isinstance(data, TabularDataset):
        X, categorical = data.values, data.categorical_mask
    else:
        X = np.atleast_2d(np.asarray(data, dtype=float))
        categorical = np.zeros(X.shape[1], dtype=bool) if categorical is None else np.asarray(categorical, bool)
    if X.shape[0] == 0:
        raise DataError("conditional sampler needs data")
    if config.max_rows is not None and X.shape[0] > config.max_rows:
        rng = np.random.default_rng(config.seed)
        X = X[np.sort(rng.choice(X.shape[0], config.max_rows, replace=False))]
    return ConditionalSampler(X, categorical, config)
