"""Tiny dependency-free SVG line plots."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#7f7f7f")
W, H, PAD = 640, 420, 60


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [float(e) for e in range(a, b + 1)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 5))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= 6:
            step *= mult
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step) + 1)]


def line_plot(
    series: Sequence[tuple[str, Sequence[float], Sequence[float]]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    logx: bool = False,
    logy: bool = False,
    step: bool = False,
) -> str:
    """Render ``(label, xs, ys)`` series as an SVG document string."""

    def tx(v):
        return math.log10(v) if logx else v

    def ty(v):
        return math.log10(v) if logy else v

    pts = [(tx(x), ty(y)) for _, xs, ys in series for x, y in zip(xs, ys)
           if (not logx or x > 0) and (not logy or y > 0)]
    if not pts:
        pts = [(0.0, 0.0), (1.0, 1.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    ypad = 0.05 * (y1 - y0)
    y0, y1 = y0 - ypad, y1 + ypad

    def px(v):
        return PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(v):
        return H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1, logx):
        if x0 <= t <= x1:
            label = f"{10 ** t:g}" if logx else f"{t:g}"
            out.append(f'<text x="{px(t):.2f}" y="{H - PAD + 18}" font-size="11" text-anchor="middle">{label}</text>')
    for t in _ticks(y0, y1, logy):
        if y0 <= t <= y1:
            label = f"{10 ** t:.3g}" if logy else f"{t:.3g}"
            out.append(f'<text x="{PAD - 6}" y="{py(t) + 4:.2f}" font-size="11" text-anchor="end">{label}</text>')
    for i, (label, xs, ys) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        coords = [(px(tx(x)), py(ty(y))) for x, y in zip(xs, ys)
                  if (not logx or x > 0) and (not logy or y > 0)]
        if step and coords:
            stepped = [coords[0]]
            for (ax, ay), (bx, by) in zip(coords, coords[1:]):
                stepped += [(bx, ay), (bx, by)]
            coords = stepped
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in coords)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{W - PAD + 4}" y="{PAD + 14 * i}" font-size="11" fill="{color}">{escape(label)}</text>')
    out.append(f'<text x="{W / 2}" y="{PAD / 2}" font-size="14" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<text x="{W / 2}" y="{H - 15}" font-size="12" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="15" y="{H / 2}" font-size="12" text-anchor="middle" transform="rotate(-90 15 {H / 2})">{escape(ylabel)}</text>'
    )
    out.append("</svg>")
    return "\n".join(out) + "\n"
