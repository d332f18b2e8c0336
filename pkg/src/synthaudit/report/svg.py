"""A small deterministic SVG 1.1 writer.

Coordinates are printed with two decimals and elements are emitted in
insertion order, so equal inputs give byte-identical files.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape, quoteattr

import numpy as np

WIDTH, HEIGHT = 800, 500
REAL_COLOR = "#1f77b4"
SYNTH_COLOR = "#d62728"
NEUTRAL = "#555555"
POSITIVE = "#d62728"
NEGATIVE = "#1f77b4"
FONT = "Helvetica, Arial, sans-serif"


def num(v: float) -> str:
    s = f"{float(v):.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _attrs(attrs: dict) -> str:
    parts = []
    for k, v in attrs.items():
        if v is None:
            continue
        key = k.rstrip("_").replace("_", "-")
        val = num(v) if isinstance(v, float) else str(v)
        parts.append(f"{key}={quoteattr(val)}")
    return " ".join(parts)


@dataclass
class Canvas:
    title: str = ""
    width: int = WIDTH
    height: int = HEIGHT
    elements: list[str] = field(default_factory=list)

    def add(self, tag: str, text: str | None = None, **attrs) -> None:
        a = _attrs(attrs)
        if text is None:
            self.elements.append(f"<{tag} {a}/>")
        else:
            self.elements.append(f"<{tag} {a}>{escape(text)}</{tag}>")

    def rect(self, x, y, w, h, fill, cls=None, **kw):
        if w < 0:
            x, w = x + w, -w
        if h < 0:
            y, h = y + h, -h
        self.add("rect", x=float(x), y=float(y), width=float(w), height=float(h), fill=fill, class_=cls, **kw)

    def line(self, x1, y1, x2, y2, stroke=NEUTRAL, width=1.0, cls=None, **kw):
        self.add("line", x1=float(x1), y1=float(y1), x2=float(x2), y2=float(y2), stroke=stroke,
                 stroke_width=float(width), class_=cls, **kw)

    def polyline(self, xs, ys, stroke, width=1.0, cls=None, **kw):
        pts = " ".join(f"{num(x)},{num(y)}" for x, y in zip(xs, ys))
        self.add("polyline", points=pts, fill="none", stroke=stroke, stroke_width=float(width), class_=cls, **kw)

    def circle(self, x, y, r, fill, cls=None, **kw):
        self.add("circle", cx=float(x), cy=float(y), r=float(r), fill=fill, class_=cls, **kw)

    def polygon(self, xs, ys, fill, cls=None, **kw):
        pts = " ".join(f"{num(x)},{num(y)}" for x, y in zip(xs, ys))
        self.add("polygon", points=pts, fill=fill, class_=cls, **kw)

    def text(self, x, y, s, size=11, anchor="start", cls=None, **kw):
        self.add("text", str(s), x=float(x), y=float(y), font_size=size, font_family=FONT, text_anchor=anchor,
                 class_=cls, **kw)

    def to_string(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">')
        body = [head, f'<rect x="0" y="0" width="{self.width}" height="{self.height}" fill="#ffffff"/>']
        if self.title:
            body.append(f"<title>{escape(self.title)}</title>")
        body.extend(self.elements)
        body.append("</svg>")
        return "\n".join(body) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_string(), encoding="utf-8")


@dataclass(frozen=True)
class Axis:
    """Linear map from data interval [lo, hi] to pixel interval [a, b]."""
    lo: float
    hi: float
    a: float
    b: float

    def __call__(self, v):
        span = self.hi - self.lo
        t = (v - self.lo) / span if span > 0 else 0.5
        return self.a + t * (self.b - self.a)


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    # spans below float resolution at this magnitude would give a step that cannot advance
    if not hi - lo > 1e-9 * max(abs(lo), abs(hi), 1e-300):
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** int(f"{raw:e}".split("e")[1])
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first, last = int(np.ceil(lo / step - 1e-9)), int(np.floor(hi / step + 1e-9))
    return [round(k * step, 12) for k in range(first, last + 1)]


def tick_label(v: float) -> str:
    return f"{v:.6g}"
