"""Minimal static SVG charts (line plots and scatter plots) without a plotting library."""

from __future__ import annotations

import math
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
W, H = 640, 400
ML, MR, MT, MB = 60, 150, 40, 50


def _range(vals: Sequence[float]) -> tuple[float, float]:
    vals = [v for v in vals if v is not None and math.isfinite(v)]
    if not vals:
        return 0.0, 1.0
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    step = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(step))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= step), default=step)
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12:
        out.append(round(v, 10))
        v += step
    return out


class _Frame:
    def __init__(self, xr, yr, title, xlabel, ylabel):
        self.x0, self.x1 = xr
        self.y0, self.y1 = yr
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" '
            'font-family="sans-serif" font-size="11">',
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{ML + (W - ML - MR) / 2:.1f}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
            f'<text x="15" y="{MT + (H - MT - MB) / 2:.1f}" text-anchor="middle" '
            f'transform="rotate(-90 15 {MT + (H - MT - MB) / 2:.1f})">{escape(ylabel)}</text>',
            f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" fill="none" stroke="black"/>',
        ]
        for t in _ticks(self.x0, self.x1):
            x = self.px(t)
            self.parts.append(f'<line x1="{x:.2f}" y1="{H - MB}" x2="{x:.2f}" y2="{H - MB + 4}" stroke="black"/>')
            self.parts.append(f'<text x="{x:.2f}" y="{H - MB + 16}" text-anchor="middle">{t:g}</text>')
        for t in _ticks(self.y0, self.y1):
            y = self.py(t)
            self.parts.append(f'<line x1="{ML - 4}" y1="{y:.2f}" x2="{ML}" y2="{y:.2f}" stroke="black"/>')
            self.parts.append(f'<text x="{ML - 6}" y="{y + 4:.2f}" text-anchor="end">{t:g}</text>')

    def px(self, x: float) -> float:
        return ML + (x - self.x0) / (self.x1 - self.x0) * (W - ML - MR)

    def py(self, y: float) -> float:
        return H - MB - (y - self.y0) / (self.y1 - self.y0) * (H - MT - MB)

    def legend(self, labels: Sequence[str]) -> None:
        for k, lab in enumerate(labels):
            y = MT + 14 + 16 * k
            c = PALETTE[k % len(PALETTE)]
            self.parts.append(f'<rect x="{W - MR + 10}" y="{y - 8}" width="10" height="10" fill="{c}"/>')
            self.parts.append(f'<text x="{W - MR + 24}" y="{y + 1}">{escape(lab)}</text>')

    def svg(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def line_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
              xlabel: str = "", ylabel: str = "", y_range: tuple[float, float] | None = None) -> str:
    xs = [x for xv, _ in series.values() for x in xv]
    ys = [y for _, yv in series.values() for y in yv if y is not None]
    f = _Frame(_range(xs), y_range or _range(ys), title, xlabel, ylabel)
    for k, (label, (xv, yv)) in enumerate(series.items()):
        pts = [(x, y) for x, y in zip(xv, yv) if y is not None and math.isfinite(y)]
        if not pts:
            continue
        path = " ".join(f"{f.px(x):.2f},{f.py(y):.2f}" for x, y in pts)
        f.parts.append(f'<polyline points="{path}" fill="none" stroke="{PALETTE[k % len(PALETTE)]}" '
                       'stroke-width="1.5"/>')
    f.legend(list(series))
    return f.svg()


def scatter_plot(groups: Mapping[str, Sequence[tuple[float, float]]], title: str = "",
                 xlabel: str = "", ylabel: str = "") -> str:
    xs = [p[0] for pts in groups.values() for p in pts]
    ys = [p[1] for pts in groups.values() for p in pts]
    f = _Frame(_range(xs), _range(ys), title, xlabel, ylabel)
    for k, pts in enumerate(groups.values()):
        c = PALETTE[k % len(PALETTE)]
        for x, y in pts:
            f.parts.append(f'<circle cx="{f.px(x):.2f}" cy="{f.py(y):.2f}" r="2.5" fill="{c}"/>')
    f.legend(list(groups))
    return f.svg()
