"""Autoregressive CART-chain synthesizer and the independent-marginals baseline.

Column k is modelled by a regression (numeric) or classification (categorical)
tree on the columns before it in the chain; sampling walks the chain and, at
each column, draws a training value uniformly from the leaf reached by the
partially generated row. The first column, and every column in
``independent`` mode, is drawn from its empirical marginal. Sampled values
are therefore always values seen in training.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cart import grow_tree
from .dataset import ColumnSchema, TabularDataset, schema_fingerprint
from .errors import DataError
from .trees import CompiledForest, Tree

MODES = ("independent", "cart_chain")
BLOCK = 4096


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "cart_chain"
    order: tuple[str, ...] | None = None
    first: tuple[str, ...] = ()
    max_depth: int = 8
    min_leaf: int = 10
    mi_bins: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown sampler mode {self.mode!r}")
        if self.max_depth < 1 or self.min_leaf < 1:
            raise DataError("max_depth and min_leaf must be at least 1")

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        d = dict(d)
        for k in ("order", "first"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class _ColumnModel:
    column: int
    pool: np.ndarray                  # all pool values, grouped by leaf
    offsets: np.ndarray               # start of each leaf's pool (indexed by node id)
    sizes: np.ndarray                 # pool size per node id (0 for internal nodes)
    tree: Tree | None = None

    def __post_init__(self):
        self._forest = None if self.tree is None else CompiledForest([self.tree])

    def draw(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = X.shape[0]
        u = rng.random(n)
        if self.tree is None:
            return self.pool[np.minimum((u * len(self.pool)).astype(np.int64), len(self.pool) - 1)]
        leaf = self._forest.leaves(X)[:, 0]
        k = np.minimum((u * self.sizes[leaf]).astype(np.int64), self.sizes[leaf] - 1)
        return self.pool[self.offsets[leaf] + k]

    def to_dict(self) -> dict:
        leaves = np.flatnonzero(self.sizes) if self.tree is not None else []
        return {
            "column": self.column,
            "tree": None if self.tree is None else self.tree.to_dict(),
            "pools": ({str(int(k)): self.pool[self.offsets[k]:self.offsets[k] + self.sizes[k]].tolist()
                       for k in leaves} if self.tree is not None else {"marginal": self.pool.tolist()}),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "_ColumnModel":
        if d["tree"] is None:
            pool = np.array(d["pools"]["marginal"], dtype=float)
            return cls(int(d["column"]), pool, np.zeros(1, np.int64), np.array([len(pool)]))
        tree = Tree.from_dict(d["tree"])
        return _with_pools(int(d["column"]), tree, {int(k): np.array(v, float) for k, v in d["pools"].items()})


def _with_pools(column: int, tree: Tree, pools: Mapping[int, np.ndarray]) -> _ColumnModel:
    sizes = np.zeros(tree.n_nodes, dtype=np.int64)
    offsets = np.zeros(tree.n_nodes, dtype=np.int64)
    parts, pos = [], 0
    for k in sorted(pools):
        offsets[k] = pos
        sizes[k] = len(pools[k])
        parts.append(pools[k])
        pos += len(pools[k])
    if np.any(sizes[tree.feature == -1] == 0):
        raise DataError("every leaf pool must be nonempty")
    return _ColumnModel(column, np.concatenate(parts), offsets, sizes, tree)


@dataclass
class ChainModel:
    schema: tuple[ColumnSchema, ...]
    order: list[int]
    columns: dict[int, _ColumnModel]
    config: SamplerConfig = field(default_factory=SamplerConfig)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def pool_values(self, j: int) -> np.ndarray:
        """Every value column ``j`` can be sampled from."""
        return np.unique(self.columns[j].pool)

    def to_dict(self) -> dict:
        return {
            "format": "synthaudit.chain",
            "schema": [c.to_dict() for c in self.schema],
            "schema_fingerprint": schema_fingerprint(self.schema),
            "config": asdict(self.config),
            "order": [self.schema[j].name for j in self.order],
            "columns": [self.columns[j].to_dict() for j in self.order],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChainModel":
        if d.get("format") != "synthaudit.chain":
            raise DataError("not a chain model dump")
        schema = tuple(ColumnSchema.from_dict(c) for c in d["schema"])
        names = [c.name for c in schema]
        cols = {int(c["column"]): _ColumnModel.from_dict(c) for c in d["columns"]}
        return cls(schema, [names.index(n) for n in d["order"]], cols, SamplerConfig.from_dict(d["config"]))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ChainModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _discretize(x: np.ndarray, categorical: bool, bins: int) -> np.ndarray:
    if categorical:
        return np.unique(x, return_inverse=True)[1]
    edges = np.unique(np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="right")


def mutual_information(a: np.ndarray, b: np.ndarray) -> float:
    """Plug-in mutual information (nats) of two discrete code vectors."""
    ia = np.unique(a, return_inverse=True)[1]
    ib = np.unique(b, return_inverse=True)[1]
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    pxy = table / table.sum()
    px, py = pxy.sum(1, keepdims=True), pxy.sum(0, keepdims=True)
    nz = pxy > 0
    return float(np.sum(pxy[nz] * np.log(pxy[nz] / (px @ py)[nz])))


def column_order(data: TabularDataset, first: Sequence[str] = (), bins: int = 10) -> list[int]:
    """``first`` columns, then the rest by descending summed mutual information with all other columns."""
    p = data.p
    codes = [_discretize(data.values[:, j], data.schema[j].is_categorical, bins) for j in range(p)]
    mi = np.zeros((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            mi[i, j] = mi[j, i] = mutual_information(codes[i], codes[j])
    head = [data.index(n) for n in first]
    rest = sorted((j for j in range(p) if j not in head), key=lambda j: (-mi[j].sum(), j))
    return head + rest


def fit_chain(data: TabularDataset, config: SamplerConfig | None = None) -> ChainModel:
    config = config or SamplerConfig()
    if data.n == 0:
        raise DataError("cannot fit a chain on empty data")
    if data.n < config.min_leaf:
        raise DataError("fewer rows than min_leaf")
    if config.order is not None:
        order = [data.index(n) for n in config.order]
        if sorted(order) != list(range(data.p)):
            raise DataError("column order must list every column exactly once")
    else:
        order = column_order(data, config.first, config.mi_bins)
    X = data.values
    categorical = data.categorical_mask
    rng = np.random.default_rng(config.seed)
    columns = {}
    for pos, j in enumerate(order):
        y = X[:, j]
        if pos == 0 or config.mode == "independent":
            columns[j] = _ColumnModel(j, y.copy(), np.zeros(1, np.int64), np.array([len(y)]))
            continue
        if categorical[j]:
            levels, codes = np.unique(y, return_inverse=True)
            tree = grow_tree(X, codes, order[:pos], categorical, criterion="gini", max_depth=config.max_depth,
                             min_leaf=config.min_leaf, rng=rng, n_classes=max(len(levels), 2))
        else:
            tree = grow_tree(X, y, order[:pos], categorical, criterion="mse", max_depth=config.max_depth,
                             min_leaf=config.min_leaf, rng=rng)
        leaf = tree.apply(X)
        pools = {int(k): y[leaf == k] for k in np.unique(leaf)}
        columns[j] = _with_pools(j, tree, pools)
    return ChainModel(data.schema, order, columns, config)


def _fixed_vector(model: ChainModel, fixed) -> np.ndarray:
    """NaN for free columns, the encoded value for fixed ones."""
    p = len(model.schema)
    out = np.full(p, np.nan)
    if fixed is None:
        return out
    if isinstance(fixed, Mapping):
        names = model.names
        for name, v in fixed.items():
            if name not in names:
                raise DataError(f"no column named {name!r}")
            j = names.index(name)
            col = model.schema[j]
            out[j] = col.encode(v) if (col.is_categorical and isinstance(v, str)) else float(v)
    else:
        arr = np.asarray(fixed, dtype=float)
        if arr.shape != (p,):
            raise DataError(f"fixed vector must have {p} entries")
        out[:] = arr
    for j, col in enumerate(model.schema):
        v = out[j]
        if np.isnan(v):
            continue
        if not np.isfinite(v):
            raise DataError(f"fixed value for {col.name!r} is not finite")
        if col.is_categorical and (v != int(v) or not 0 <= v < len(col.categories)):
            raise DataError(f"fixed value for {col.name!r} is not one of its categories")
    return out


def sample(model: ChainModel, n: int, seed: int = 0, fixed=None) -> TabularDataset:
    """``n`` rows from the chain; ``fixed`` maps column names (or a NaN-padded vector) to fixed values.

    Rows are generated in blocks with block-specific seeds, so the first ``m``
    rows of a draw of ``n >= m`` rows equal a draw of ``m`` rows.
    """
    if n < 0:
        raise DataError("n must be nonnegative")
    p = len(model.schema)
    fx = _fixed_vector(model, fixed)
    is_fixed = ~np.isnan(fx)
    blocks = []
    for b in range((n + BLOCK - 1) // BLOCK):
        rng = np.random.default_rng([seed, b])
        X = np.zeros((BLOCK, p))
        X[:, is_fixed] = fx[is_fixed]
        for j in model.order:
            draw = model.columns[j].draw(X, rng)   # always consume the stream so fixing stays seed-aligned
            if not is_fixed[j]:
                X[:, j] = draw
        blocks.append(X)
    values = np.vstack(blocks)[:n] if blocks else np.zeros((0, p))
    return TabularDataset(model.schema, values, "synthetic")


def baseline_synthesize(real: TabularDataset, mode: str = "cart_chain", n: int | None = None, seed: int = 0,
                        config: SamplerConfig | None = None) -> TabularDataset:
    """Fit a chain (or independent marginals) on ``real`` and sample ``n`` rows (default: as many as real)."""
    config = config or SamplerConfig()
    config = SamplerConfig(**{**asdict(config), "mode": mode, "seed": seed,
                              "order": config.order, "first": config.first})
    return sample(fit_chain(real, config), real.n if n is None else n, seed)
