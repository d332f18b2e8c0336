"""Typed tabular data, CSV ingestion and the real-vs-synthetic detection dataset.

Cells are stored in a single float matrix. Numeric columns hold their values,
categorical columns hold integer category codes (index into the column's
category list). Code ``-1`` is the reserved ``"unknown"`` label for values
that are not part of the schema.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, SchemaMismatchError

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
UNKNOWN = "unknown"
UNKNOWN_CODE = -1
MISSING_TOKENS = frozenset({"", "?", "NA", "N/A", "NaN", "nan", "null", "NULL", "None"})
INTEGER_CATEGORY_THRESHOLD = 20


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    categories: tuple[str, ...] = ()
    missing_policy: str = "drop_row"

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.missing_policy not in ("drop_row", "reject"):
            raise DataError(f"column {self.name!r}: unknown missing_policy {self.missing_policy!r}")
        if self.kind == CATEGORICAL:
            if len(self.categories) == 0:
                raise DataError(f"categorical column {self.name!r} lists no categories")
            if len(set(self.categories)) != len(self.categories):
                raise DataError(f"categorical column {self.name!r} has duplicate categories")
        elif self.categories:
            raise DataError(f"numeric column {self.name!r} cannot list categories")

    @property
    def is_categorical(self) -> bool:
        return self.kind == CATEGORICAL

    def encode(self, label: str) -> int:
        """Category code for ``label``; unseen labels map to "unknown"."""
        try:
            return self.categories.index(label)
        except ValueError:
            if UNKNOWN in self.categories:
                return self.categories.index(UNKNOWN)
            return UNKNOWN_CODE

    def decode(self, code: float) -> str:
        c = int(code)
        if 0 <= c < len(self.categories):
            return self.categories[c]
        return UNKNOWN

    def to_dict(self) -> dict:
        d = {"name": self.name, "kind": self.kind}
        if self.is_categorical:
            d["categories"] = list(self.categories)
        d["missing_policy"] = self.missing_policy
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSchema":
        return cls(
            name=d["name"],
            kind=d["kind"],
            categories=tuple(d.get("categories", ())),
            missing_policy=d.get("missing_policy", "drop_row"),
        )


def schema_fingerprint(schema: Sequence[ColumnSchema]) -> str:
    payload = json.dumps([[c.name, c.kind, list(c.categories)] for c in schema], separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _check_schema(schema: Sequence[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise DataError(f"duplicate column names in schema: {names}")


@dataclass(frozen=True, eq=False)
class TabularDataset:
    """Immutable typed table. ``values`` is an ``(n, p)`` float matrix."""

    schema: tuple[ColumnSchema, ...]
    values: np.ndarray
    provenance: str = "unlabeled"

    def __post_init__(self):
        schema = tuple(self.schema)
        object.__setattr__(self, "schema", schema)
        _check_schema(schema)
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1 and len(schema) == 1:
            values = values.reshape(-1, 1)
        if values.ndim != 2 or values.shape[1] != len(schema):
            raise DataError(f"values of shape {values.shape} do not match {len(schema)} columns")
        if not np.all(np.isfinite(values)):
            raise DataError("dataset contains non-finite cells")
        for j, col in enumerate(schema):
            if col.is_categorical:
                codes = values[:, j]
                if np.any(codes != np.round(codes)) or np.any(codes < UNKNOWN_CODE) or np.any(codes >= len(col.categories)):
                    raise DataError(f"column {col.name!r} holds invalid category codes")
        if self.provenance not in ("real", "synthetic", "unlabeled"):
            raise DataError(f"unknown provenance {self.provenance!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    @property
    def categorical_mask(self) -> np.ndarray:
        return np.array([c.is_categorical for c in self.schema], dtype=bool)

    def fingerprint(self) -> str:
        return schema_fingerprint(self.schema)

    def index(self, name: str) -> int:
        for j, c in enumerate(self.schema):
            if c.name == name:
                return j
        raise DataError(f"no column named {name!r}")

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    def take(self, rows) -> "TabularDataset":
        return TabularDataset(self.schema, self.values[np.asarray(rows)], self.provenance)

    def with_values(self, values: np.ndarray, provenance: str | None = None) -> "TabularDataset":
        return TabularDataset(self.schema, values, provenance or self.provenance)

    def decoded_rows(self) -> list[list]:
        """Rows with categorical codes replaced by their labels."""
        out = []
        for row in self.values:
            out.append([c.decode(v) if c.is_categorical else float(v) for c, v in zip(self.schema, row)])
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.names)
            for row in self.values:
                w.writerow([c.decode(v) if c.is_categorical else format_number(v) for c, v in zip(self.schema, row)])

    @classmethod
    def from_columns(cls, columns: dict, schema: Sequence[ColumnSchema] | None = None,
                     provenance: str = "unlabeled") -> "TabularDataset":
        """Build a dataset from a mapping of column name to raw values (numbers or labels)."""
        names = list(columns)
        if schema is None:
            schema = infer_schema([[_to_text(v) for v in col] for col in zip(*columns.values())], names)
        n = len(next(iter(columns.values()))) if columns else 0
        values = np.empty((n, len(schema)))
        for j, col in enumerate(schema):
            raw = columns[col.name]
            if col.is_categorical:
                values[:, j] = [col.encode(str(v)) for v in raw]
            else:
                values[:, j] = np.asarray(raw, dtype=float)
        return cls(tuple(schema), values, provenance)


def format_number(v: float) -> str:
    """Canonical text for a numeric cell; parses back to the identical float."""
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _to_text(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (float, np.floating)):
        return format_number(float(v))
    return str(v)


def _parse_float(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def infer_schema(rows: Sequence[Sequence[str]], names: Sequence[str],
                 integer_category_threshold: int = INTEGER_CATEGORY_THRESHOLD) -> list[ColumnSchema]:
    """Guess column kinds from a sample of text rows.

    A column is numeric when every non-missing cell parses as a finite number,
    unless all of them are integers and there are at most
    ``integer_category_threshold`` distinct values, in which case it is treated
    as categorical. Everything else is categorical with the observed labels in
    order of first appearance.
    """
    if len(rows) < 1:
        raise DataError("cannot infer a schema from zero rows")
    schema = []
    for j, name in enumerate(names):
        cells = [r[j].strip() for r in rows if r[j].strip() not in MISSING_TOKENS]
        parsed = [_parse_float(c) for c in cells]
        numeric = len(cells) > 0 and all(v is not None for v in parsed)
        if numeric:
            integral = all(float(v).is_integer() for v in parsed)
            if integral and len(set(parsed)) <= integer_category_threshold:
                numeric = False
        if numeric:
            schema.append(ColumnSchema(name, NUMERIC))
        else:
            cats = list(dict.fromkeys(cells)) or [UNKNOWN]
            schema.append(ColumnSchema(name, CATEGORICAL, tuple(cats)))
    return schema


def load_schema(path: str | Path) -> list[ColumnSchema]:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, list):
        raise DataError("schema file must hold a JSON array")
    return [ColumnSchema.from_dict(d) for d in raw]


def save_schema(schema: Sequence[ColumnSchema], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([c.to_dict() for c in schema], fh, indent=2)
        fh.write("\n")


def load_csv(path: str | Path, schema: Sequence[ColumnSchema] | None = None,
             provenance: str = "unlabeled", infer_rows: int | None = None) -> TabularDataset:
    """Read an RFC-4180 CSV file with a header row into a typed dataset."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file (no header)") from None
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
                rows.append([c.strip() for c in row])
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}") from e
    if not rows:
        raise DataError(f"{path}: zero data rows")

    if schema is None:
        sample = rows if infer_rows is None else rows[:infer_rows]
        schema = infer_schema(sample, header)
        schema = _widen_categories(schema, rows)
    else:
        schema = list(schema)
        if [c.name for c in schema] != header:
            raise SchemaMismatchError(f"{path}: header {header} does not match schema {[c.name for c in schema]}")

    values = np.empty((len(rows), len(schema)))
    keep = np.ones(len(rows), dtype=bool)
    for j, col in enumerate(schema):
        lookup = {lbl: k for k, lbl in enumerate(col.categories)}
        for i, row in enumerate(rows):
            cell = row[j]
            missing = cell in MISSING_TOKENS
            if col.is_categorical:
                if missing and UNKNOWN not in lookup:
                    v = None
                elif cell in lookup:
                    v = lookup[cell]
                else:
                    v = col.encode(UNKNOWN if missing else cell)
            else:
                v = None if missing else _parse_float(cell)
            if v is None:
                if col.missing_policy == "reject":
                    what = "missing" if missing else "unparseable numeric"
                    raise DataError(f"{path}:{i + 2}: {what} cell {cell!r} in column {col.name!r}")
                keep[i] = False
                values[i, j] = 0.0
            else:
                values[i, j] = v
    dropped = int((~keep).sum())
    if dropped:
        logger.info("%s: dropped %d rows with missing values", path, dropped)
    if not keep.any():
        raise DataError(f"{path}: zero rows left after dropping missing values")
    return TabularDataset(tuple(schema), values[keep], provenance)


def _widen_categories(schema: list[ColumnSchema], rows: list[list[str]]) -> list[ColumnSchema]:
    # categories seen beyond the inference sample are appended, not mapped to "unknown"
    out = []
    for j, col in enumerate(schema):
        if col.is_categorical:
            seen = dict.fromkeys(col.categories)
            for r in rows:
                if r[j] not in MISSING_TOKENS:
                    seen.setdefault(r[j])
            col = replace(col, categories=tuple(seen))
        out.append(col)
    return out


def merge_schemas(a: Sequence[ColumnSchema], b: Sequence[ColumnSchema]) -> list[ColumnSchema]:
    """Union of two compatible schemas; categories of ``a`` keep their codes."""
    if [c.name for c in a] != [c.name for c in b]:
        raise SchemaMismatchError(f"column names differ: {[c.name for c in a]} vs {[c.name for c in b]}")
    out = []
    for ca, cb in zip(a, b):
        if ca.kind != cb.kind:
            raise SchemaMismatchError(f"column {ca.name!r} is {ca.kind} in one dataset and {cb.kind} in the other")
        if ca.is_categorical:
            cats = tuple(dict.fromkeys(ca.categories + cb.categories))
            out.append(replace(ca, categories=cats))
        else:
            out.append(ca)
    return out


def align(d: TabularDataset, schema: Sequence[ColumnSchema]) -> TabularDataset:
    """Re-encode ``d`` under ``schema``; labels missing from ``schema`` become "unknown"."""
    schema = tuple(schema)
    if d.schema == schema:
        return d
    if [c.name for c in d.schema] != [c.name for c in schema]:
        raise SchemaMismatchError(f"column names differ: {d.names} vs {[c.name for c in schema]}")
    values = d.values.copy()
    for j, (old, new) in enumerate(zip(d.schema, schema)):
        if old.kind != new.kind:
            raise SchemaMismatchError(f"column {new.name!r} changes kind")
        if new.is_categorical:
            lut = np.array([new.encode(lbl) for lbl in old.categories] + [new.encode(UNKNOWN)], dtype=float)
            codes = values[:, j].astype(int)
            values[:, j] = lut[np.where(codes < 0, len(old.categories), codes)]
    return TabularDataset(schema, values, d.provenance)


@dataclass(frozen=True, eq=False)
class DetectionDataset:
    """Real and synthetic rows with labels (1 = real, 0 = synthetic)."""

    data: TabularDataset
    labels: np.ndarray
    is_test: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        if labels.shape != (self.data.n,):
            raise DataError("labels must have one entry per row")
        if not np.isin(labels, (0, 1)).all():
            raise DataError("labels must be 0 (synthetic) or 1 (real)")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.is_test is not None:
            t = np.asarray(self.is_test, dtype=bool)
            t.setflags(write=False)
            object.__setattr__(self, "is_test", t)

    @property
    def split_assignment(self) -> list[str] | None:
        if self.is_test is None:
            return None
        return ["test" if t else "train" for t in self.is_test]

    def part(self, which: str) -> tuple[np.ndarray, np.ndarray]:
        """``(X, y)`` of the train or test split."""
        if self.is_test is None:
            raise DataError("dataset has no train/test split")
        mask = self.is_test if which == "test" else ~self.is_test
        return self.data.values[mask], self.labels[mask]

    def subset(self, which: str) -> "DetectionDataset":
        mask = self.is_test if which == "test" else ~self.is_test
        idx = np.flatnonzero(mask)
        return DetectionDataset(self.data.take(idx), self.labels[idx], None, self.seed)


def build_detection_dataset(real: TabularDataset, synthetic: TabularDataset, seed: int = 0) -> DetectionDataset:
    if real.n == 0 or synthetic.n == 0:
        raise DataError("both real and synthetic data must be nonempty")
    schema = merge_schemas(real.schema, synthetic.schema)
    real = align(real, schema)
    synthetic = align(synthetic, schema)
    rng = np.random.default_rng(seed)
    m = min(real.n, synthetic.n)
    ri = np.sort(rng.choice(real.n, m, replace=False)) if real.n > m else np.arange(m)
    si = np.sort(rng.choice(synthetic.n, m, replace=False)) if synthetic.n > m else np.arange(m)
    values = np.vstack([real.values[ri], synthetic.values[si]])
    labels = np.concatenate([np.ones(m, dtype=np.int64), np.zeros(m, dtype=np.int64)])
    return DetectionDataset(TabularDataset(tuple(schema), values, "unlabeled"), labels, None, seed)


def train_test_split(d: DetectionDataset, test_fraction: float = 0.3, seed: int = 0) -> DetectionDataset:
    """Stratified split; each class contributes ``round(test_fraction * n_class)`` test rows."""
    if not 0 < test_fraction < 1:
        raise DataError("test_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    is_test = np.zeros(d.data.n, dtype=bool)
    for cls in (0, 1):
        idx = np.flatnonzero(d.labels == cls)
        if len(idx) < 2:
            raise DataError(f"class {cls} has fewer than 2 rows; cannot split")
        k = min(max(int(round(test_fraction * len(idx))), 1), len(idx) - 1)
        is_test[rng.permutation(idx)[:k]] = True
    return DetectionDataset(d.data, d.labels, is_test, seed)


# --- statistics -------------------------------------------------------------

_OPS = {
    "==": np.equal, "!=": np.not_equal, "<": np.less, "<=": np.less_equal,
    ">": np.greater, ">=": np.greater_equal,
}


@dataclass(frozen=True)
class Condition:
    column: str
    op: str
    value: float | str

    def mask(self, d: TabularDataset) -> np.ndarray:
        j = d.index(self.column)
        col = d.schema[j]
        if self.op not in _OPS:
            raise DataError(f"unknown operator {self.op!r}")
        if col.is_categorical:
            if self.op not in ("==", "!="):
                raise DataError(f"operator {self.op!r} is not defined for categorical column {col.name!r}")
            target = col.encode(str(self.value))
        else:
            target = float(self.value)
        return _OPS[self.op](d.values[:, j], target)

    def to_dict(self) -> dict:
        return {"column": self.column, "op": self.op, "value": self.value}

    @classmethod
    def parse(cls, text: str) -> "Condition":
        """Parse ``"age<=20"`` style predicates."""
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if op in text:
                col, val = text.split(op, 1)
                val = val.strip()
                num = _parse_float(val)
                return cls(col.strip(), op, num if num is not None else val)
        raise DataError(f"cannot parse predicate {text!r}")


@dataclass(frozen=True)
class ConditionalQuery:
    """A statistic of ``target`` over the rows selected by ``where``.

    ``stat`` is ``"mean"`` (numeric target), ``"fraction"`` (share of rows whose
    target equals ``value``) or ``"corr"`` (Pearson correlation of ``target``
    with ``other``).
    """

    target: str
    where: tuple[Condition, ...] = ()
    stat: str = "mean"
    value: float | str | None = None
    other: str | None = None
    label: str | None = None

    def describe(self) -> str:
        if self.label:
            return self.label
        cond = " & ".join(f"{c.column}{c.op}{_to_text(c.value)}" for c in self.where)
        if self.stat == "corr":
            head = f"corr({self.target},{self.other})"
        elif self.stat == "fraction":
            head = f"P({self.target}=={_to_text(self.value)})"
        else:
            head = f"mean({self.target})"
        return head + (f" | {cond}" if cond else "")


@dataclass
class StatsReport:
    n_rows: int
    marginals: dict
    correlation_columns: list[str]
    correlation: np.ndarray
    conditionals: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_rows": self.n_rows,
            "marginals": self.marginals,
            "correlation": {
                "columns": self.correlation_columns,
                "matrix": [[_finite_or_none(v) for v in row] for row in self.correlation],
            },
            "conditionals": self.conditionals,
        }

    def conditional(self, label: str) -> float | None:
        for c in self.conditionals:
            if c["label"] == label:
                return c["value"]
        raise KeyError(label)


def _finite_or_none(v) -> float | None:
    v = float(v)
    return v if math.isfinite(v) else None


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    if len(a) < 2:
        return float("nan")
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else float("nan")


def column_statistics(d: TabularDataset, conditionals: Iterable[ConditionalQuery] = ()) -> StatsReport:
    marginals = {}
    for j, col in enumerate(d.schema):
        x = d.values[:, j]
        if col.is_categorical:
            codes = x.astype(int)
            counts = np.bincount(np.where(codes < 0, len(col.categories), codes), minlength=len(col.categories) + 1)
            freqs = {lbl: counts[k] / d.n for k, lbl in enumerate(col.categories)}
            if counts[-1]:
                freqs[UNKNOWN] = counts[-1] / d.n
            marginals[col.name] = {"kind": CATEGORICAL, "frequencies": {k: float(v) for k, v in freqs.items()}}
        else:
            q = np.quantile(x, [0.0, 0.25, 0.5, 0.75, 1.0])
            marginals[col.name] = {
                "kind": NUMERIC,
                "mean": float(x.mean()),
                "sd": float(x.std(ddof=1)) if d.n > 1 else 0.0,
                "quantiles": {"0": float(q[0]), "0.25": float(q[1]), "0.5": float(q[2]), "0.75": float(q[3]), "1": float(q[4])},
            }
    num = [j for j, c in enumerate(d.schema) if not c.is_categorical]
    corr = np.eye(len(num))
    for a in range(len(num)):
        for b in range(a + 1, len(num)):
            corr[a, b] = corr[b, a] = _pearson(d.values[:, num[a]], d.values[:, num[b]])

    results = []
    for q in conditionals:
        mask = np.ones(d.n, dtype=bool)
        for c in q.where:
            mask &= c.mask(d)
        rows = int(mask.sum())
        value = None
        if rows > 0:
            t = d.values[mask, d.index(q.target)]
            if q.stat == "mean":
                if d.schema[d.index(q.target)].is_categorical:
                    raise DataError(f"mean of categorical column {q.target!r} is undefined")
                value = float(t.mean())
            elif q.stat == "fraction":
                value = float(np.mean(Condition(q.target, "==", q.value).mask(d)[mask]))
            elif q.stat == "corr":
                if q.other is None:
                    raise DataError("corr query needs `other`")
                value = _finite_or_none(_pearson(t, d.values[mask, d.index(q.other)]))
            else:
                raise DataError(f"unknown statistic {q.stat!r}")
        results.append({
            "label": q.describe(),
            "target": q.target,
            "stat": q.stat,
            "where": [c.to_dict() for c in q.where],
            "n_rows": rows,
            "value": value,
        })
    return StatsReport(d.n, marginals, [d.schema[j].name for j in num], corr, results)
