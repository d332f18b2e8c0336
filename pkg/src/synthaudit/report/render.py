"""Figure renderers: importance bars/boxes, ICE/PDP effects, force and waterfall plots.

All renderers are pure functions of their inputs and return a ``Canvas``.
Elements carry a ``class`` so tests and downstream tools can find them.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..effects import EffectResult, UNREALISTIC_REGION
from ..errors import DataError
from ..importance import ImportanceReport
from ..shapley.types import InteractionMatrix, ShapleyVector
from .svg import (HEIGHT, NEGATIVE, NEUTRAL, POSITIVE, REAL_COLOR, SYNTH_COLOR, WIDTH, Axis, Canvas,
                  nice_ticks, tick_label)

TITLES = {"PFI": "Permutation feature importance", "mean_abs_shap": "Mean |SHAP|",
          "interaction": "Shapley interaction importance"}
SCALE_LABELS = {"probability": "detector output (probability of real)", "log_odds": "detector output (log-odds)"}


def _x_axis(c: Canvas, ax: Axis, y: float, label: str = "", ticks=None):
    c.line(ax.a, y, ax.b, y, cls="axis")
    for t in (nice_ticks(ax.lo, ax.hi) if ticks is None else ticks):
        x = ax(t)
        c.line(x, y, x, y + 4, cls="tick")
        c.text(x, y + 16, tick_label(t), size=10, anchor="middle")
    if label:
        c.text((ax.a + ax.b) / 2, y + 34, label, size=11, anchor="middle", cls="axis-label")


def _y_axis(c: Canvas, ax: Axis, x: float, label: str = ""):
    c.line(x, ax.a, x, ax.b, cls="axis")
    for t in nice_ticks(min(ax.lo, ax.hi), max(ax.lo, ax.hi)):
        y = ax(t)
        c.line(x - 4, y, x, y, cls="tick")
        c.text(x - 6, y + 3, tick_label(t), size=10, anchor="end")
    if label:
        yc = (ax.a + ax.b) / 2
        c.text(x - 40, yc, label, size=11, anchor="middle", cls="axis-label",
               transform=f"rotate(-90 {x - 40:.2f} {yc:.2f})")


def _check_scales(items) -> str:
    scales = sorted({it.scale for it in items})
    if len(scales) != 1:
        raise DataError(f"cannot mix output scales {scales} in one figure")
    return scales[0]


# importance

def _importance_panel(c: Canvas, report: ImportanceReport, x0: float, x1: float, top_k: int | None):
    entries = report.ranked()[:top_k] if top_k else report.ranked()
    if not entries:
        raise DataError("empty importance section")
    lo = min(0.0, *(min([e.mean, *e.values]) for e in entries))
    hi = max(max([e.mean, *e.values]) for e in entries)
    hi = hi if hi > lo else lo + 1.0
    label_w = min(0.45 * (x1 - x0), 7 * max(len(e.label) for e in entries) + 10)
    ax = Axis(lo, hi, x0 + label_w, x1 - 10)
    top, bottom = 50.0, HEIGHT - 60.0
    row = (bottom - top) / len(entries)
    c.text((x0 + x1) / 2, 30, TITLES.get(report.method, report.method), size=13, anchor="middle", cls="panel-title")
    for k, e in enumerate(entries):
        yc = top + (k + 0.5) * row
        h = 0.6 * row
        c.text(ax.a - 6, yc + 4, e.label, size=10, anchor="end", cls="feature-label")
        c.rect(ax(0.0), yc - h / 2, ax(e.mean) - ax(0.0), h, "#9ecae1", cls="bar", data_feature=e.label,
               data_value=f"{e.mean:.6g}")
        if len(e.values) >= 2:
            v = np.asarray(e.values)
            q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
            iqr = q3 - q1
            wlo, whi = v[v >= q1 - 1.5 * iqr].min(), v[v <= q3 + 1.5 * iqr].max()
            c.line(ax(wlo), yc, ax(q1), yc, cls="whisker")
            c.line(ax(q3), yc, ax(whi), yc, cls="whisker")
            c.rect(ax(q1), yc - h / 3, ax(q3) - ax(q1), 2 * h / 3, "none", cls="box", stroke=NEUTRAL)
            c.line(ax(med), yc - h / 3, ax(med), yc + h / 3, stroke="#000000", cls="median")
    _x_axis(c, ax, bottom, report.loss and f"loss increase ({report.loss})" or "importance")


def render_importance(*reports: ImportanceReport, top_k: int | None = None) -> Canvas:
    """Side-by-side panels, one per report, entries sorted by descending mean.

    Entries with two or more values (repeats or replications) get a box with whiskers.
    """
    if not reports:
        raise DataError("empty importance section")
    c = Canvas(" | ".join(TITLES.get(r.method, r.method) for r in reports))
    w = WIDTH / len(reports)
    for k, r in enumerate(reports):
        _importance_panel(c, r, k * w + 10, (k + 1) * w - 10, top_k)
    return c


# effects

def _band(c: Canvas, ay: Axis, x0: float, x1: float, delta: float):
    c.line(x0, ay(0.5), x1, ay(0.5), stroke="#999999", cls="reference")
    for v in (0.5 - delta, 0.5 + delta):
        c.line(x0, ay(v), x1, ay(v), stroke="#bbbbbb", cls="band", stroke_dasharray="4 3")


def _flag_fill(kind: str) -> str:
    return "#f4a582" if kind == UNREALISTIC_REGION else "#92c5de"


def _ice_curves(eff: EffectResult):
    plot = eff.plot_rows if eff.plot_rows is not None else np.arange(eff.ice.shape[0])
    for i in plot:
        lab = None if eff.labels is None else int(eff.labels[i])
        yield eff.ice[i], (NEUTRAL if lab is None else REAL_COLOR if lab == 1 else SYNTH_COLOR)


def render_effects(eff: EffectResult) -> Canvas:
    if eff.pdp is None:
        raise DataError("effect result has no PDP")
    if eff.grid.is_categorical:
        return _render_categorical(eff)
    c = Canvas(f"Feature effect: {eff.feature}")
    pts = eff.grid.points
    edges = np.asarray(eff.marginals.get("edges", [pts[0], pts[-1]]), dtype=float)
    lo, hi = float(min(pts[0], edges[0])), float(max(pts[-1], edges[-1]))
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    ax = Axis(lo, hi, 80, WIDTH - 30)
    ay = Axis(0.0, 1.0, 330, 50)
    c.text(WIDTH / 2, 30, f"ICE and PDP for {eff.feature}", size=13, anchor="middle", cls="panel-title")
    step = (pts[-1] - pts[0]) / max(len(pts) - 1, 1) if len(pts) > 1 else (hi - lo) / 20
    for r in eff.regions:
        a, b = (r.start, r.end) if r.end > r.start else (r.start - step / 2, r.end + step / 2)
        c.rect(ax(a), ay(1.0), ax(b) - ax(a), ay(0.0) - ay(1.0), _flag_fill(r.kind), cls="flag-region",
               fill_opacity="0.35", data_kind=r.kind)
    for curve, color in _ice_curves(eff):
        c.polyline(ax(pts), ay(curve), color, 0.6, cls="ice", stroke_opacity="0.25")
    _band(c, ay, ax.a, ax.b, eff.delta)
    c.polyline(ax(pts), ay(eff.pdp), "#000000", 2.5, cls="pdp")
    _y_axis(c, ay, ax.a, "P(real)")
    # real/synthetic histograms, real above the baseline and synthetic mirrored below
    groups = [(g, col, s) for g, col, s in (("real", REAL_COLOR, -1), ("synthetic", SYNTH_COLOR, 1),
                                            ("all", NEUTRAL, -1)) if g in eff.marginals]
    dens = [np.asarray(eff.marginals[g]) for g, _, _ in groups]
    top = max([d.max() for d in dens if d.size] + [1e-12])
    base_y = 395.0
    for (g, col, sgn), d in zip(groups, dens):
        for k, v in enumerate(d):
            if v > 0:
                c.rect(ax(edges[k]), base_y, ax(edges[k + 1]) - ax(edges[k]), sgn * 35 * v / top, col,
                       cls=f"hist-{g}", fill_opacity="0.6")
    _x_axis(c, ax, base_y + 45, eff.feature)
    return c


def _render_categorical(eff: EffectResult) -> Canvas:
    c = Canvas(f"Feature effect: {eff.feature}")
    labels = eff.grid.labels
    k = len(labels)
    slot = (WIDTH - 110) / k
    xs = 80 + slot * (np.arange(k) + 0.5)
    ay = Axis(0.0, 1.0, 310, 50)
    c.text(WIDTH / 2, 30, f"Category effects for {eff.feature}", size=13, anchor="middle", cls="panel-title")
    flagged = {lab: r.kind for r in eff.regions for lab in r.labels}
    for x, lab in zip(xs, labels):
        if lab in flagged:
            c.rect(x - slot / 2, ay(1.0), slot, ay(0.0) - ay(1.0), _flag_fill(flagged[lab]), cls="flag-region",
                   fill_opacity="0.35", data_kind=flagged[lab])
    _band(c, ay, 80, WIDTH - 30, eff.delta)
    w = min(0.5 * slot, 40)
    for x, box, pd in zip(xs, eff.boxes or [], eff.pdp):
        c.line(x, ay(box["whisker_low"]), x, ay(box["q1"]), cls="whisker")
        c.line(x, ay(box["q3"]), x, ay(box["whisker_high"]), cls="whisker")
        c.rect(x - w / 2, ay(box["q3"]), w, ay(box["q1"]) - ay(box["q3"]), "#deebf7", cls="box", stroke=NEUTRAL,
               data_category=box["category"])
        c.line(x - w / 2, ay(box["median"]), x + w / 2, ay(box["median"]), stroke="#000000", cls="median")
        c.circle(x, ay(pd), 3.5, "#000000", cls="pdp-marker")
    _y_axis(c, ay, 80, "P(real)")
    groups = [(g, col) for g, col in (("real", REAL_COLOR), ("synthetic", SYNTH_COLOR), ("all", NEUTRAL))
              if g in eff.marginals]
    freq_top = max([max(eff.marginals[g]) for g, _ in groups] + [1e-12])
    bw = 0.8 * slot / max(len(groups), 1)
    for gi, (g, col) in enumerate(groups):
        for x, f in zip(xs, eff.marginals[g]):
            x0 = x - 0.4 * slot + gi * bw
            c.rect(x0, 400, bw, -60 * f / freq_top, col, cls=f"freq-{g}", fill_opacity="0.7")
    c.line(80, 400, WIDTH - 30, 400, cls="axis")
    rotate = k > 8
    for x, lab in zip(xs, labels):
        if rotate:
            c.text(x, 412, lab, size=9, anchor="end", transform=f"rotate(-45 {x:.2f} 412)", cls="category-label")
        else:
            c.text(x, 416, lab, size=10, anchor="middle", cls="category-label")
    return c


# force and waterfall

def render_force(vectors: ShapleyVector | Sequence[ShapleyVector], titles: Sequence[str] | None = None) -> Canvas:
    """One force bar per vector: positive pushes from the base value, then negative back to the prediction."""
    vectors = [vectors] if isinstance(vectors, ShapleyVector) else list(vectors)
    if not vectors:
        raise DataError("nothing to plot")
    scale = _check_scales(vectors)
    c = Canvas("Force plot")
    ends = [v.base_value for v in vectors] + [v.prediction for v in vectors]
    ends += [v.base_value + v.values[v.values > 0].sum() for v in vectors]
    lo, hi = min(ends), max(ends)
    pad = 0.05 * (hi - lo) if hi > lo else 0.5
    ax = Axis(lo - pad, hi + pad, 60, WIDTH - 40)
    band = (HEIGHT - 120) / len(vectors)
    for r, v in enumerate(vectors):
        yc = 70 + (r + 0.5) * band
        title = titles[r] if titles else (v.engine or f"instance {r + 1}")
        c.text(60, yc - 30, title, size=12, cls="panel-title")
        pos = [j for j in np.argsort(-v.values, kind="stable") if v.values[j] > 0]
        neg = [j for j in np.argsort(v.values, kind="stable") if v.values[j] < 0]
        at = v.base_value
        for j in pos + neg:
            nxt = at + v.values[j]
            c.rect(ax(at), yc - 12, ax(nxt) - ax(at), 24, POSITIVE if v.values[j] > 0 else NEGATIVE,
                   cls="segment", stroke="#ffffff", data_feature=v.feature_names[j], data_value=f"{v.values[j]:.6g}")
            if abs(ax(nxt) - ax(at)) > 40:
                c.text((ax(at) + ax(nxt)) / 2, yc + 26, v.feature_names[j], size=9, anchor="middle")
            at = nxt
        c.line(ax(v.base_value), yc - 20, ax(v.base_value), yc + 20, stroke="#000000", cls="base-marker")
        c.text(ax(v.base_value), yc - 22, f"base {v.base_value:.3f}", size=9, anchor="middle")
        c.line(ax(v.prediction), yc - 16, ax(v.prediction), yc + 16, stroke="#000000", width=2.0,
               cls="prediction-marker")
        c.text(ax(v.prediction), yc + 40, f"f(x) {v.prediction:.3f}", size=10, anchor="middle")
    _x_axis(c, ax, HEIGHT - 50, SCALE_LABELS[scale])
    return c


def waterfall_terms(item: ShapleyVector | InteractionMatrix, top_k: int = 10) -> list[tuple[str, float]]:
    """Largest |term| first (ties by label); terms past ``top_k`` are merged into one 'rest' term."""
    if top_k < 1:
        raise DataError("top_k must be at least 1")
    if isinstance(item, InteractionMatrix):
        terms = [(" × ".join(f), v) for f, v in item.terms()]
    else:
        terms = list(zip(item.feature_names, (float(v) for v in item.values)))
    terms.sort(key=lambda t: (-abs(t[1]), t[0]))
    head, tail = terms[:top_k], terms[top_k:]
    if tail:
        head.append((f"rest ({len(tail)} terms)", float(np.sum([v for _, v in tail]))))
    return head


def render_waterfall(items, top_k: int = 10, titles: Sequence[str] | None = None) -> Canvas:
    items = [items] if isinstance(items, (ShapleyVector, InteractionMatrix)) else list(items)
    if not items:
        raise DataError("nothing to plot")
    scale = _check_scales(items)
    c = Canvas("Waterfall plot")
    w = WIDTH / len(items)
    for k, item in enumerate(items):
        terms = waterfall_terms(item, top_k)
        x0, x1 = k * w + 10, (k + 1) * w - 10
        cum = item.base_value + np.concatenate([[0.0], np.cumsum([v for _, v in terms])])
        lo, hi = float(cum.min()), float(cum.max())
        pad = 0.05 * (hi - lo) if hi > lo else 0.5
        label_w = min(0.45 * (x1 - x0), 7 * max(len(t) for t, _ in terms) + 10)
        ax = Axis(lo - pad, hi + pad, x0 + label_w, x1 - 10)
        top, bottom = 60.0, HEIGHT - 70.0
        row = (bottom - top) / len(terms)
        title = titles[k] if titles else f"f(x) = {item.prediction:.3f}"
        c.text((x0 + x1) / 2, 35, title, size=12, anchor="middle", cls="panel-title")
        for r, (label, v) in enumerate(terms):
            yc = top + (r + 0.5) * row
            c.text(ax.a - 6, yc + 4, label, size=10, anchor="end", cls="feature-label")
            c.rect(ax(cum[r]), yc - 0.35 * row, ax(cum[r + 1]) - ax(cum[r]), 0.7 * row,
                   POSITIVE if v > 0 else NEGATIVE, cls="segment", data_feature=label, data_value=f"{v:.6g}")
        c.line(ax(item.base_value), top, ax(item.base_value), bottom, stroke="#999999", cls="base-marker",
               stroke_dasharray="3 3")
        c.line(ax(item.prediction), top, ax(item.prediction), bottom, stroke="#000000", cls="prediction-marker")
        _x_axis(c, ax, bottom + 5, SCALE_LABELS[scale])
    return c
