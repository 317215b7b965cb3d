"""Minimal self-contained SVG line plots.

Several series are drawn with a red to blue ramp, so earlier times appear
red and later times blue.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 480
MARGIN = 60


def ramp(k: int, n: int) -> str:
    """``k``-th of ``n`` colours running from red to blue."""
    f = 0.0 if n <= 1 else k / (n - 1)
    r, b = round(215 * (1 - f) + 20 * f), round(25 * (1 - f) + 200 * f)
    return f"#{r:02x}30{b:02x}"


def _ticks(lo, hi, n=5):
    return np.linspace(lo, hi, n)


def _frame(xlim, ylim, xlabel, ylabel, title):
    x0, x1 = xlim
    y0, y1 = ylim
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN

    def sx(v):
        return MARGIN + (np.asarray(v) - x0) / (x1 - x0) * pw

    def sy(v):
        return HEIGHT - MARGIN - (np.asarray(v) - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line class="axis" x1="{MARGIN}" y1="{HEIGHT - MARGIN}" x2="{WIDTH - MARGIN}" '
        f'y2="{HEIGHT - MARGIN}" stroke="black"/>',
        f'<line class="axis" x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{HEIGHT - MARGIN}" '
        f'stroke="black"/>',
    ]
    for v in _ticks(x0, x1):
        parts.append(f'<text x="{sx(v):.1f}" y="{HEIGHT - MARGIN + 16}" font-size="11" '
                     f'text-anchor="middle">{v:.3g}</text>')
    for v in _ticks(y0, y1):
        parts.append(f'<text x="{MARGIN - 6}" y="{sy(v) + 4:.1f}" font-size="11" '
                     f'text-anchor="end">{v:.3g}</text>')
    parts.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 15}" font-size="13" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="15" y="{HEIGHT / 2}" font-size="13" text-anchor="middle" '
                 f'transform="rotate(-90 15 {HEIGHT / 2})">{escape(ylabel)}</text>')
    if title:
        parts.append(f'<text x="{WIDTH / 2}" y="25" font-size="14" '
                     f'text-anchor="middle">{escape(title)}</text>')
    return parts, sx, sy


def _limits(arrays):
    v = np.concatenate([np.ravel(a) for a in arrays])
    v = v[np.isfinite(v)]
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.03 * (hi - lo)
    return lo - pad, hi + pad


def _polyline(x, y, sx, sy, colour, width=1.5, dash=None):
    ok = np.isfinite(x) & np.isfinite(y)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(sx(x[ok]), sy(y[ok])))
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{colour}" '
            f'stroke-width="{width}"{d}/>')


def lines_svg(series, labels=None, xlabel="x", ylabel="y", title="") -> str:
    """One polyline per ``(x, y)`` pair, coloured along the ramp."""
    series = [(np.asarray(x, float), np.asarray(y, float)) for x, y in series]
    if not series:
        raise ValueError("nothing to plot")
    xlim = _limits([s[0] for s in series])
    ylim = _limits([s[1] for s in series])
    parts, sx, sy = _frame(xlim, ylim, xlabel, ylabel, title)
    n = len(series)
    for k, (x, y) in enumerate(series):
        parts.append(_polyline(x, y, sx, sy, ramp(k, n)))
    if labels:
        for k, lab in enumerate(labels):
            parts.append(f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 14 * k}" font-size="10" '
                         f'fill="{ramp(k, n)}">{escape(str(lab))}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def curves_svg(curves, labels=None, xlabel="x", ylabel="y", title="") -> str:
    """Return curves as polylines through their ``(x, y)`` points."""
    curves = list(curves)
    if not curves:
        raise ValueError("nothing to plot")
    return lines_svg([(c.x, c.y) for c in curves], labels, xlabel, ylabel, title)


def bands_svg(axis, lower, median, upper, truth=None, xlabel="w", ylabel="lambda",
              title="") -> str:
    """Median line with a shaded band, optionally a dashed truth line."""
    axis = np.asarray(axis, float)
    lower, median, upper = (np.asarray(a, float) for a in (lower, median, upper))
    if axis.size == 0:
        raise ValueError("nothing to plot")
    arrays = [lower, median, upper] + ([np.asarray(truth, float)] if truth is not None else [])
    parts, sx, sy = _frame(_limits([axis]), _limits(arrays), xlabel, ylabel, title)
    poly = np.concatenate([np.column_stack([sx(axis), sy(upper)]),
                           np.column_stack([sx(axis[::-1]), sy(lower[::-1])])])
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in poly)
    parts.append(f'<polygon points="{pts}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>')
    parts.append(_polyline(axis, median, sx, sy, "black"))
    if truth is not None:
        parts.append(_polyline(axis, np.asarray(truth, float), sx, sy, "#d7301f", dash="5,3"))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
