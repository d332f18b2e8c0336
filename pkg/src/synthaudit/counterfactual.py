"""Monte Carlo counterfactuals (MCCE) for detected-synthetic rows.

Candidates are sampled from a CART chain fit on real data, with the immutable
features fixed to the query instance. Candidates the detector scores above 0.5
are kept, deduplicated and ranked by (number of changed features, Gower
distance, distance of the score from 0.5).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import ColumnSchema, format_number
from .errors import DataError
from .generator import ChainModel, sample
from .shapley.types import PROBABILITY, model_output

THRESHOLD = 0.5
FOUND, ALREADY_REAL, NO_VALID = "found", "already_real", "no_valid"


@dataclass(frozen=True)
class MCCEConfig:
    n_samples: int = 100_000
    immutable: tuple[str, ...] = ()
    max_returned: int = 5
    weights: tuple[float, ...] | None = None    # per-feature Gower weights, uniform if None
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise DataError("n_samples must be at least 1")
        if self.max_returned < 1:
            raise DataError("max_returned must be at least 1")
        if self.weights is not None and (len(self.weights) == 0 or min(self.weights) < 0 or sum(self.weights) <= 0):
            raise DataError("Gower weights must be nonnegative with a positive sum")

    @classmethod
    def from_dict(cls, d: dict) -> "MCCEConfig":
        d = dict(d)
        for k in ("immutable", "weights"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class Counterfactual:
    values: np.ndarray
    changed: np.ndarray
    gower: float
    score: float

    @property
    def sparsity(self) -> int:
        return int(self.changed.sum())


@dataclass
class CounterfactualSet:
    instance: np.ndarray
    score: float
    candidates: list[Counterfactual]
    status: str
    n_tried: int
    n_valid: int
    schema: tuple[ColumnSchema, ...] = field(default_factory=tuple)
    index: int | None = None

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def _decode(self, values: np.ndarray) -> list:
        out = []
        for col, v in zip(self.schema, values):
            out.append(col.decode(v) if col.is_categorical else float(v))
        return out

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "status": self.status,
            "score": float(self.score),
            "n_tried": int(self.n_tried),
            "n_valid": int(self.n_valid),
            "features": self.names,
            "instance": self._decode(self.instance),
            "candidates": [{"values": self._decode(c.values),
                            "changed": [self.names[j] for j in np.flatnonzero(c.changed)],
                            "sparsity": c.sparsity, "gower": float(c.gower), "score": float(c.score)}
                           for c in self.candidates],
        }

    def table(self) -> str:
        """Plain-text table: instance row, then one row per candidate; changed cells end in '*'."""
        def cell(col, v, mark):
            text = col.decode(v) if col.is_categorical else format_number(v)
            return text + ("*" if mark else "")
        header = ["", *self.names, "score"]
        rows = [["instance", *[cell(c, v, False) for c, v in zip(self.schema, self.instance)],
                 f"{self.score:.3f}"]]
        for k, cf in enumerate(self.candidates):
            rows.append([f"cf{k + 1}", *[cell(c, v, m) for c, v, m in zip(self.schema, cf.values, cf.changed)],
                         f"{cf.score:.3f}"])
        widths = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]
        lines = ["  ".join(s.ljust(w) for s, w in zip(r, widths)).rstrip() for r in [header, *rows]]
        if self.status == NO_VALID:
            lines.append(f"no valid counterfactual among {self.n_tried} candidates")
        return "\n".join(lines)


def chain_ranges(chain: ChainModel) -> np.ndarray:
    """Numeric feature ranges from the chain's training pools (0 for categorical columns)."""
    r = np.zeros(len(chain.schema))
    for j, col in enumerate(chain.schema):
        if not col.is_categorical:
            v = chain.pool_values(j)
            v = v[np.isfinite(v)]
            r[j] = float(v.max() - v.min()) if v.size else 0.0
    return r


def _same(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a == b) | (np.isnan(a) & np.isnan(b))


def gower_distance(x, x2, schema: Sequence[ColumnSchema], ranges, weights=None) -> np.ndarray | float:
    """Weighted mean per-feature distance: numeric |Δ|/range clamped to 1, categorical mismatch.

    ``x2`` may be a matrix of candidates, in which case one distance per row is returned.
    Features with zero range contribute 0.
    """
    x = np.asarray(x, dtype=float)
    X = np.atleast_2d(np.asarray(x2, dtype=float))
    p = len(schema)
    if x.shape != (p,) or X.shape[1] != p:
        raise DataError("instances do not match the schema width")
    ranges = np.asarray(ranges, dtype=float)
    w = np.ones(p) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (p,):
        raise DataError("one Gower weight per feature is required")
    categorical = np.array([c.is_categorical for c in schema])
    d = np.zeros(X.shape)
    d[:, categorical] = ~_same(X[:, categorical], x[categorical])
    num = ~categorical & (ranges > 0)
    with np.errstate(invalid="ignore"):
        diff = np.abs(X[:, num] - x[num]) / ranges[num]
    diff = np.where(_same(X[:, num], x[num]), 0.0, np.nan_to_num(diff, nan=1.0))
    d[:, num] = np.minimum(diff, 1.0)
    out = d @ w / w.sum()
    return float(out[0]) if np.ndim(x2) == 1 else out


@dataclass
class CandidatePool:
    """Chain draws and their detector scores; shareable across instances with no immutable features."""
    values: np.ndarray
    scores: np.ndarray


def draw_candidates(model, chain: ChainModel, config: MCCEConfig, instance=None) -> CandidatePool:
    fixed = None
    if config.immutable:
        if instance is None:
            raise DataError("immutable features need the query instance")
        fixed = np.full(len(chain.schema), np.nan)
        for name in config.immutable:
            j = chain.names.index(name)
            fixed[j] = instance[j]
    values = sample(chain, config.n_samples, config.seed, fixed=fixed).values
    return CandidatePool(values, model_output(model, PROBABILITY)(values))


def _instance_vector(instance, chain: ChainModel) -> np.ndarray:
    x = np.asarray(instance, dtype=float).ravel()
    if x.shape != (len(chain.schema),):
        raise DataError(f"instance must have {len(chain.schema)} features")
    return x


def generate_counterfactuals(model, instance, chain: ChainModel, config: MCCEConfig | None = None,
                             ranges=None, pool: CandidatePool | None = None,
                             index: int | None = None) -> CounterfactualSet:
    config = config or MCCEConfig()
    x = _instance_vector(instance, chain)
    missing = [n for n in config.immutable if n not in chain.names]
    if missing:
        raise DataError(f"unknown immutable features {missing}")
    ranges = chain_ranges(chain) if ranges is None else np.asarray(ranges, dtype=float)
    score = float(model_output(model, PROBABILITY)(x[None, :])[0])
    if score > THRESHOLD:
        trivial = Counterfactual(x.copy(), np.zeros(len(x), bool), 0.0, score)
        return CounterfactualSet(x, score, [trivial], ALREADY_REAL, 0, 0, chain.schema, index)
    if pool is None or config.immutable:
        pool = draw_candidates(model, chain, config, x)
    valid = pool.scores > THRESHOLD
    rows, first = np.unique(pool.values[valid], axis=0, return_index=True) if valid.any() else (
        np.zeros((0, len(x))), np.zeros(0, np.int64))
    scores = pool.scores[valid][first]
    if len(rows) == 0:
        return CounterfactualSet(x, score, [], NO_VALID, len(pool.values), 0, chain.schema, index)
    changed = ~_same(rows, x)
    sparsity = changed.sum(1)
    gower = gower_distance(x, rows, chain.schema, ranges, config.weights)
    order = np.lexsort((np.abs(scores - THRESHOLD), gower, sparsity))[:config.max_returned]
    candidates = [Counterfactual(rows[k], changed[k], float(gower[k]), float(scores[k])) for k in order]
    return CounterfactualSet(x, score, candidates, FOUND, len(pool.values), len(rows), chain.schema, index)


def generate_many(model, instances, chain: ChainModel, config: MCCEConfig | None = None,
                  indices: Sequence[int] | None = None) -> list[CounterfactualSet]:
    """Counterfactuals for several instances, reusing one candidate pool when nothing is immutable."""
    config = config or MCCEConfig()
    instances = np.atleast_2d(np.asarray(instances, dtype=float))
    ranges = chain_ranges(chain)
    pool = None if config.immutable else draw_candidates(model, chain, config)
    indices = list(indices) if indices is not None else [None] * len(instances)
    return [generate_counterfactuals(model, x, chain, config, ranges, pool, i) for x, i in zip(instances, indices)]
