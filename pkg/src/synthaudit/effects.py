"""Feature effects: ICE curves, partial dependence and categorical effect summaries.

Effects are on the probability scale of the detector, so 0.5 is the level at
which a feature value carries no evidence either way. Grid regions whose PDP
falls below ``0.5 - delta`` look synthetic (values the generator produces but
real data does not); regions above ``0.5 + delta`` look real (values the
generator fails to produce often enough).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import DetectionDataset, TabularDataset
from .errors import DataError, SchemaMismatchError

DELTA = 0.05
RESOLUTION = 30
PLOT_CURVES = 200
UNREALISTIC_REGION = "unrealistic synthetic region"
UNDERREPRESENTED_REGION = "underrepresented region"
CORRELATION_CAVEAT = ("ICE and PDP evaluate the detector at feature values combined with the other features "
                      "of each row; with strongly dependent features some of these combinations are off the "
                      "data manifold.")


@dataclass(frozen=True)
class Grid:
    feature: str
    points: np.ndarray
    method: str
    labels: tuple[str, ...] = ()
    degenerate: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            raise DataError("grid is empty")
        if self.method != "categories" and np.any(np.diff(pts) <= 0):
            raise DataError("numeric grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def is_categorical(self) -> bool:
        return self.method == "categories"

    def to_dict(self) -> dict:
        out = {"feature": self.feature, "method": self.method, "points": [float(v) for v in self.points]}
        if self.labels:
            out["labels"] = list(self.labels)
        if self.degenerate:
            out["degenerate"] = True
        return out


def make_grid(d: TabularDataset, feature: str, resolution: int = RESOLUTION, method: str = "quantile") -> Grid:
    """Evaluation grid: empirical quantiles (actual data values), a uniform range, or all categories.

    Categories are listed by descending frequency in ``d`` (ties by code).
    """
    j = d.index(feature)
    col = d.schema[j]
    x = d.values[:, j]
    if col.is_categorical:
        counts = np.bincount(x[x >= 0].astype(int), minlength=len(col.categories))
        order = sorted(range(len(col.categories)), key=lambda k: (-counts[k], k))
        return Grid(feature, np.array(order, dtype=float), "categories", tuple(col.categories[k] for k in order))
    if resolution < 2:
        raise DataError("numeric grids need resolution >= 2")
    if d.n == 0:
        raise DataError("cannot build a grid from an empty dataset")
    if np.all(x == x[0]):
        return Grid(feature, np.array([x[0]]), method, degenerate=True)
    if method == "quantile":
        pts = np.unique(np.quantile(x, np.linspace(0.0, 1.0, resolution), method="inverted_cdf"))
    elif method == "uniform":
        pts = np.linspace(x.min(), x.max(), resolution)
    else:
        raise DataError(f"unknown grid method {method!r}")
    return Grid(feature, pts, method)


@dataclass
class Region:
    kind: str
    start: float
    end: float
    extreme: float
    labels: tuple[str, ...] = ()

    def describe(self, feature: str) -> str:
        if self.labels:
            where = "category " + ", ".join(self.labels)
        elif self.start == self.end:
            where = f"value {self.start:g}"
        else:
            where = f"range [{self.start:g}, {self.end:g}]"
        return f"{feature}: {self.kind} at {where} (PDP {self.extreme:.3f})"

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "start": float(self.start), "end": float(self.end), "pdp": float(self.extreme)}
        if self.labels:
            out["labels"] = list(self.labels)
        return out


@dataclass
class EffectResult:
    """ICE curves of every evaluated row, their mean (PDP) and marginal annotations.

    ``plot_rows`` indexes the stratified subset of curves drawn in figures.
    """

    grid: Grid
    ice: np.ndarray
    labels: np.ndarray | None = None
    rows: np.ndarray | None = None
    plot_rows: np.ndarray | None = None
    pdp: np.ndarray | None = None
    delta: float = DELTA
    regions: list[Region] = field(default_factory=list)
    marginals: dict = field(default_factory=dict)
    boxes: list[dict] | None = None

    @property
    def feature(self) -> str:
        return self.grid.feature

    def to_dict(self) -> dict:
        plot = self.plot_rows if self.plot_rows is not None else np.arange(self.ice.shape[0])
        out = {
            "feature": self.feature,
            "kind": "categorical" if self.grid.is_categorical else "numeric",
            "grid": self.grid.to_dict(),
            "n_instances": int(self.ice.shape[0]),
            "pdp": None if self.pdp is None else [float(v) for v in self.pdp],
            "delta": self.delta,
            "regions": [r.to_dict() for r in self.regions],
            "ice": {
                "rows": [int(self.rows[i]) if self.rows is not None else int(i) for i in plot],
                "labels": None if self.labels is None else [int(self.labels[i]) for i in plot],
                "values": [[float(v) for v in self.ice[i]] for i in plot],
            },
            "marginals": self.marginals,
            "notes": [CORRELATION_CAVEAT],
        }
        if self.boxes is not None:
            out["boxes"] = self.boxes
        return out

    def findings(self) -> list[str]:
        return [r.describe(self.feature) for r in self.regions]

    @classmethod
    def from_dict(cls, d: dict) -> "EffectResult":
        """Rebuild from ``to_dict`` output; only the plotted ICE curves survive the round trip."""
        g = d["grid"]
        grid = Grid(g["feature"], np.array(g["points"], dtype=float), g["method"], tuple(g.get("labels", ())),
                    bool(g.get("degenerate", False)))
        ice = np.array(d["ice"]["values"], dtype=float).reshape(-1, len(grid.points))
        labels = None if d["ice"]["labels"] is None else np.array(d["ice"]["labels"], dtype=np.int64)
        regions = [Region(r["kind"], r["start"], r["end"], r["pdp"], tuple(r.get("labels", ()))) for r in d["regions"]]
        return cls(grid, ice, labels, np.array(d["ice"]["rows"], dtype=np.int64), None,
                   None if d["pdp"] is None else np.array(d["pdp"], dtype=float), d["delta"], regions,
                   d["marginals"], d.get("boxes"))


def _unpack(d) -> tuple[TabularDataset, np.ndarray | None]:
    if isinstance(d, DetectionDataset):
        return d.data, d.labels
    if isinstance(d, TabularDataset):
        return d, None
    raise DataError("expected a TabularDataset or DetectionDataset")


def stratified_rows(labels: np.ndarray | None, n: int, k: int | None, seed: int) -> np.ndarray:
    """Up to ``k`` row indices, split between labels in proportion to their counts."""
    if k is None or k >= n:
        return np.arange(n)
    rng = np.random.default_rng(seed)
    if labels is None:
        return np.sort(rng.choice(n, k, replace=False))
    out = []
    classes = np.unique(labels)
    for i, c in enumerate(classes):
        idx = np.flatnonzero(labels == c)
        take = int(round(k * len(idx) / n)) if i < len(classes) - 1 else k - sum(len(o) for o in out)
        out.append(rng.choice(idx, min(max(take, 0), len(idx)), replace=False))
    return np.sort(np.concatenate(out))


def ice(model, d, feature: str, grid: Grid | None = None, instance_sample: int | None = None, seed: int = 0,
        plot_curves: int = PLOT_CURVES, chunk_rows: int = 1 << 17) -> EffectResult:
    """C(v, x_{-j}) for every selected row and grid value v.

    ``instance_sample`` (stratified by label) limits the evaluated rows; by
    default all rows are used. ``plot_curves`` stratified curves are marked for
    plotting.
    """
    data, labels = _unpack(d)
    if hasattr(model, "fingerprint") and model.fingerprint not in (None, data.fingerprint()):
        raise SchemaMismatchError("dataset schema does not match the model's schema fingerprint")
    if instance_sample is not None and instance_sample > data.n:
        raise DataError("instance_sample exceeds the number of rows")
    grid = grid or make_grid(data, feature)
    j = data.index(feature)
    rows = stratified_rows(labels, data.n, instance_sample, seed)
    X = data.values[rows]
    G = len(grid.points)
    out = np.empty((len(rows), G))
    step = max(1, chunk_rows // G)
    for s in range(0, len(rows), step):
        Xb = np.repeat(X[s:s + step], G, axis=0)
        Xb[:, j] = np.tile(grid.points, len(Xb) // G)
        out[s:s + step] = np.asarray(model.predict_proba(Xb)).reshape(-1, G)
    sub_labels = None if labels is None else labels[rows]
    plot = stratified_rows(sub_labels, len(rows), plot_curves, seed + 1)
    return EffectResult(grid, out, sub_labels, rows, plot)


def _regions(grid: Grid, pdp: np.ndarray, delta: float) -> list[Region]:
    out = []
    for kind, flag in ((UNREALISTIC_REGION, pdp < 0.5 - delta), (UNDERREPRESENTED_REGION, pdp > 0.5 + delta)):
        if grid.is_categorical:
            for g in np.flatnonzero(flag):
                out.append(Region(kind, grid.points[g], grid.points[g], pdp[g], (grid.labels[g],)))
            continue
        g = 0
        while g < len(flag):
            if not flag[g]:
                g += 1
                continue
            h = g
            while h + 1 < len(flag) and flag[h + 1]:
                h += 1
            seg = pdp[g:h + 1]
            extreme = seg.min() if kind == UNREALISTIC_REGION else seg.max()
            out.append(Region(kind, grid.points[g], grid.points[h], extreme))
            g = h + 1
    return out


def pdp(effect: EffectResult, delta: float = DELTA) -> EffectResult:
    """Fill the pointwise mean of the ICE curves and flag regions outside ``0.5 ± delta``."""
    effect.pdp = effect.ice.mean(axis=0)
    effect.delta = delta
    effect.regions = _regions(effect.grid, effect.pdp, delta)
    return effect


def _fd_edges(x: np.ndarray) -> np.ndarray:
    return np.histogram_bin_edges(x, bins="fd")


def numeric_marginals(data: TabularDataset, labels: np.ndarray | None, feature: str) -> dict:
    """Freedman-Diaconis histograms of the feature for real and synthetic rows (densities)."""
    x = data.column(feature)
    edges = _fd_edges(x) if np.ptp(x) > 0 else np.array([x[0] - 0.5, x[0] + 0.5])
    out = {"edges": [float(e) for e in edges]}
    groups = {"all": np.ones(len(x), dtype=bool)} if labels is None else {"real": labels == 1, "synthetic": labels == 0}
    for name, m in groups.items():
        counts, _ = np.histogram(x[m], bins=edges)
        total = counts.sum()
        out[name] = [float(c) / total if total else 0.0 for c in counts]
    return out


def categorical_marginals(data: TabularDataset, labels: np.ndarray | None, feature: str, grid: Grid) -> dict:
    x = data.column(feature)
    out = {"categories": list(grid.labels)}
    groups = {"all": np.ones(len(x), dtype=bool)} if labels is None else {"real": labels == 1, "synthetic": labels == 0}
    for name, m in groups.items():
        xs = x[m]
        out[name] = [float(np.mean(xs == c)) if len(xs) else 0.0 for c in grid.points]
    return out


def _box(v: np.ndarray) -> dict:
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    iqr = q3 - q1
    lo = v[v >= q1 - 1.5 * iqr].min()
    hi = v[v <= q3 + 1.5 * iqr].max()
    return {"q1": float(q1), "median": float(med), "q3": float(q3), "whisker_low": float(lo),
            "whisker_high": float(hi), "mean": float(v.mean())}


def feature_effect(model, d, feature: str, resolution: int = RESOLUTION, grid_method: str = "quantile",
                   instance_sample: int | None = None, seed: int = 0, delta: float = DELTA,
                   plot_curves: int = PLOT_CURVES) -> EffectResult:
    """ICE, PDP, flags and marginal annotations for one numeric or categorical feature."""
    data, labels = _unpack(d)
    if data.schema[data.index(feature)].is_categorical:
        return categorical_effect(model, d, feature, instance_sample, seed, delta, plot_curves)
    grid = make_grid(data, feature, resolution, grid_method)
    eff = pdp(ice(model, d, feature, grid, instance_sample, seed, plot_curves), delta)
    eff.marginals = numeric_marginals(data, labels, feature)
    return eff


def categorical_effect(model, d, feature: str, instance_sample: int | None = None, seed: int = 0,
                       delta: float = DELTA, plot_curves: int = PLOT_CURVES) -> EffectResult:
    """Per-category ICE distributions (box statistics), per-category PDP and real/synthetic frequencies."""
    data, labels = _unpack(d)
    if not data.schema[data.index(feature)].is_categorical:
        raise DataError(f"{feature!r} is not categorical")
    grid = make_grid(data, feature)
    eff = pdp(ice(model, d, feature, grid, instance_sample, seed, plot_curves), delta)
    eff.boxes = [dict(category=lab, **_box(eff.ice[:, g])) for g, lab in enumerate(grid.labels)]
    eff.marginals = categorical_marginals(data, labels, feature, grid)
    return eff
