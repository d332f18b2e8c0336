"""Self-contained toy tables for end-to-end audits.

``correlated_toy`` draws a real table with a strongly correlated Gaussian
pair, a categorical column driven by one of them, and discrete columns with
concentrated values. ``planted_synthetic`` produces its independent-marginals
counterpart with an out-of-support spike planted in ``hours``.
"""
from __future__ import annotations

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, ColumnSchema, TabularDataset
from .generator import baseline_synthesize

GROUPS = ("low", "mid", "high")
REGIONS = ("north", "south", "east", "west")
SPIKE = (80, 96)      # hours values the real data never reaches
DEPENDENT_PAIRS = (("x1", "x2"), ("x1", "group"), ("x2", "group"))

SCHEMA = (
    ColumnSchema("x1", NUMERIC),
    ColumnSchema("x2", NUMERIC),
    ColumnSchema("age", NUMERIC),
    ColumnSchema("hours", NUMERIC),
    ColumnSchema("group", CATEGORICAL, GROUPS),
    ColumnSchema("region", CATEGORICAL, REGIONS),
)


def correlated_toy(n: int = 5000, seed: int = 0, rho: float = 0.9) -> TabularDataset:
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    x1 = np.round(z[:, 0], 3)
    x2 = np.round(rho * z[:, 0] + np.sqrt(1 - rho ** 2) * z[:, 1], 3)
    age = np.clip(np.round(18 + rng.gamma(2.5, 9.0, n)), 18, 80)
    hours = np.where(rng.random(n) < 0.5, 40.0, np.clip(np.round(rng.normal(38, 10, n)), 5, 70))
    group = np.digitize(x1 + 0.3 * rng.standard_normal(n), [-0.5, 0.5]).astype(float)
    region = rng.choice(4, n, p=[0.6, 0.2, 0.12, 0.08]).astype(float)
    values = np.column_stack([x1, x2, age, hours, group, region])
    return TabularDataset(SCHEMA, values, "real")


def plant_spike(d: TabularDataset, fraction: float = 0.15, seed: int = 0, column: str = "hours",
                span: tuple[int, int] = SPIKE) -> TabularDataset:
    """Copy of ``d`` with ``fraction`` of rows moved to integer values in ``span`` (half-open)."""
    rng = np.random.default_rng(seed)
    values = d.values.copy()
    rows = rng.random(d.n) < fraction
    values[rows, d.index(column)] = rng.integers(span[0], span[1], int(rows.sum()))
    return d.with_values(values, "synthetic")


def planted_synthetic(real: TabularDataset, seed: int = 0, spike: float = 0.15) -> TabularDataset:
    """Independent-marginals synthetic data with an out-of-support spike in ``hours``."""
    synth = baseline_synthesize(real, "independent", real.n, seed)
    return plant_spike(synth, spike, seed + 1) if spike > 0 else synth
