"""Minimal deterministic SVG line/marker plots.

Numbers are written with fixed precision so the same data always yields
the same bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=70, right=170, top=40, bottom=55)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#7f7f7f")


@dataclass
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    kind: str = "line"          # line | markers | steps
    color: Optional[str] = None
    dashed: bool = False


@dataclass
class Plot:
    title: str
    xlabel: str
    ylabel: str
    logx: bool = False
    logy: bool = False
    series: list = field(default_factory=list)

    def add(self, s: Series) -> "Plot":
        self.series.append(s)
        return self


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _nice_ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.floor(lo / step) * step
    ticks = []
    v = start
    while v <= hi + 1e-9 * step:
        if v >= lo - 1e-9 * step:
            ticks.append(round(v, 12))
        v += step
    return ticks


def _tick_label(v: float, log: bool) -> str:
    if log:
        e = int(round(v))
        return f"1e{e}"
    if abs(v) >= 1e4 or (0 < abs(v) < 1e-2):
        return f"{v:.0e}"
    return f"{v:g}"


def _points(s: Series, logx: bool, logy: bool):
    pts = []
    for x, y in zip(s.x, s.y):
        x, y = float(x), float(y)
        if not (math.isfinite(x) and math.isfinite(y)):
            continue
        if (logx and x <= 0) or (logy and y <= 0):
            continue
        pts.append((math.log10(x) if logx else x, math.log10(y) if logy else y))
    return pts


def render(plot: Plot) -> str:
    all_pts = [p for s in plot.series for p in _points(s, plot.logx, plot.logy)]
    if all_pts:
        xs = [p[0] for p in all_pts]
        ys = [p[1] for p in all_pts]
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    else:
        x0, x1, y0, y1 = 0.0, 1.0, 0.0, 1.0
    if plot.logx:
        x0, x1 = math.floor(x0), math.ceil(x1)
    if plot.logy:
        y0, y1 = math.floor(y0), math.ceil(y1)
    else:
        y0 = min(y0, 0.0)
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return MARGIN["left"] + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return MARGIN["top"] + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(plot.title)}</text>',
        f'<rect x="{MARGIN["left"]}" y="{MARGIN["top"]}" width="{pw}" height="{ph}" '
        'fill="none" stroke="black"/>',
    ]
    xt = list(range(int(x0), int(x1) + 1)) if plot.logx else _nice_ticks(x0, x1)
    yt = list(range(int(y0), int(y1) + 1)) if plot.logy else _nice_ticks(y0, y1)
    if plot.logy and len(yt) > 12:
        stride = math.ceil(len(yt) / 10)
        yt = yt[::stride]
    for v in xt:
        X = sx(v)
        out.append(f'<line x1="{_fmt(X)}" y1="{_fmt(sy(y0))}" x2="{_fmt(X)}" y2="{_fmt(sy(y0) + 5)}" stroke="black"/>')
        out.append(f'<text x="{_fmt(X)}" y="{_fmt(sy(y0) + 18)}" text-anchor="middle">{_tick_label(v, plot.logx)}</text>')
    for v in yt:
        Y = sy(v)
        out.append(f'<line x1="{_fmt(sx(x0) - 5)}" y1="{_fmt(Y)}" x2="{_fmt(sx(x0))}" y2="{_fmt(Y)}" stroke="black"/>')
        out.append(f'<text x="{_fmt(sx(x0) - 8)}" y="{_fmt(Y + 4)}" text-anchor="end">{_tick_label(v, plot.logy)}</text>')
    out.append(f'<text x="{_fmt(MARGIN["left"] + pw / 2)}" y="{HEIGHT - 12}" text-anchor="middle">{escape(plot.xlabel)}</text>')
    out.append(f'<text x="16" y="{_fmt(MARGIN["top"] + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 16 {_fmt(MARGIN["top"] + ph / 2)})">{escape(plot.ylabel)}</text>')

    for i, s in enumerate(plot.series):
        color = s.color or PALETTE[i % len(PALETTE)]
        pts = [(sx(x), sy(y)) for x, y in _points(s, plot.logx, plot.logy)]
        dash = ' stroke-dasharray="5,3"' if s.dashed else ""
        if s.kind == "markers":
            for X, Y in pts:
                out.append(f'<circle cx="{_fmt(X)}" cy="{_fmt(Y)}" r="2.5" fill="{color}"/>')
        elif pts:
            if s.kind == "steps":
                path, prev = [], None
                for X, Y in pts:
                    path.append(f"{_fmt(X)},{_fmt(Y)}" if prev is None else f"{_fmt(X)},{_fmt(prev)} {_fmt(X)},{_fmt(Y)}")
                    prev = Y
                d = " ".join(path)
            else:
                d = " ".join(f"{_fmt(X)},{_fmt(Y)}" for X, Y in pts)
            out.append(f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        ly = MARGIN["top"] + 14 + 18 * i
        lx = WIDTH - MARGIN["right"] + 12
        if s.kind == "markers":
            out.append(f'<circle cx="{lx + 10}" cy="{ly - 4}" r="3" fill="{color}"/>')
        else:
            out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 20}" y2="{ly - 4}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 26}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write(plot: Plot, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(render(plot))
