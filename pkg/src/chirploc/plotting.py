"""Minimal standalone SVG line charts with the plotted data embedded."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

_W, _H, _PAD = 640, 400, 60
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _ticks(lo: float, hi: float, n: int = 5) -> list:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def line_chart_svg(series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """Render ``{label: [(x, y), ...]}`` as an SVG document string.

    Each series is also written as a CSV block inside ``<desc>`` so the
    numbers survive without the plot.
    """
    pts = [(x, y) for s in series.values() for x, y in s if math.isfinite(y)]
    if not pts:
        pts = [(0.0, 0.0)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def sx(x):
        return _PAD + (x - x0) / (x1 - x0) * (_W - 2 * _PAD)

    def sy(y):
        return _H - _PAD - (y - y0) / (y1 - y0) * (_H - 2 * _PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f"<title>{escape(title)}</title>",
    ]
    desc = []
    for label, s in series.items():
        desc.append(f"# {label}\nx,y")
        desc.extend(f"{x!r},{y!r}" for x, y in s)
    out.append("<desc>\n" + escape("\n".join(desc)) + "\n</desc>")
    out.append(f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>')
    out.append(
        f'<path d="M{_PAD},{_PAD} V{_H - _PAD} H{_W - _PAD}" stroke="black" fill="none"/>'
    )
    for t in _ticks(x0, x1):
        out.append(f'<text x="{sx(t):.1f}" y="{_H - _PAD + 18}" text-anchor="middle">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<text x="{_PAD - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{_W / 2}" y="{_PAD / 2}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(f'<text x="{_W / 2}" y="{_H - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(
        f'<text x="14" y="{_H / 2}" text-anchor="middle" transform="rotate(-90 14 {_H / 2})">'
        f"{escape(ylabel)}</text>"
    )
    for n, (label, s) in enumerate(series.items()):
        color = _COLORS[n % len(_COLORS)]
        good = [(x, y) for x, y in s if math.isfinite(y)]
        if good:
            d = " ".join(f"{'M' if k == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}" for k, (x, y) in enumerate(good))
            out.append(f'<path d="{d}" stroke="{color}" fill="none" stroke-width="1.5"/>')
        out.append(
            f'<text x="{_W - _PAD + 4}" y="{_PAD + 16 * n}" fill="{color}">{escape(str(label))}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
