"""Minimal static SVG line plots (linear or log-log axes)."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["svg_plot", "emit_plot", "nice_ticks"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
W, H = 640, 440
ML, MR, MT, MB = 72, 24, 40, 56


def nice_ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0 if lo == 0 else lo + abs(lo)
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(t) < 1e-12 * step else t)
        t += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def svg_plot(series, kind: str = "curve", title: str = "", xlabel: str = "", ylabel: str = "", annotation: str = "", slope=None) -> str:
    """SVG document for a list of (label, x, y) series.

    ``kind='loglog'`` plots log10 of |x| and |y|; ``slope`` (if given) is
    written as a text annotation carrying a ``data-slope`` attribute.
    """
    if kind not in ("curve", "loglog"):
        raise ValueError(f"unknown plot kind {kind!r}")
    prepared = []
    for label, x, y in series:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if kind == "loglog":
            ok = np.isfinite(x) & np.isfinite(y) & (x != 0) & (y != 0)
            x, y = np.log10(np.abs(x[ok])), np.log10(np.abs(y[ok]))
        else:
            ok = np.isfinite(x) & np.isfinite(y)
            x, y = x[ok], y[ok]
        if len(x):
            prepared.append((label, x, y))
    if not prepared:
        raise ValueError("nothing to plot (empty table)")
    xs = np.concatenate([p[1] for p in prepared])
    ys = np.concatenate([p[2] for p in prepared])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5 * max(1.0, abs(y0)), y1 + 0.5 * max(1.0, abs(y1))
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = W - ML - MR, H - MT - MB

    def px(v):
        return ML + (v - x0) / (x1 - x0) * pw

    def py(v):
        return MT + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in nice_ticks(x0, x1):
        lab = f"1e{_fmt(t)}" if kind == "loglog" else _fmt(t)
        out.append(f'<line x1="{px(t):.2f}" y1="{MT + ph}" x2="{px(t):.2f}" y2="{MT + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{MT + ph + 18}" text-anchor="middle">{escape(lab)}</text>')
    for t in nice_ticks(y0, y1):
        lab = f"1e{_fmt(t)}" if kind == "loglog" else _fmt(t)
        out.append(f'<line x1="{ML - 5}" y1="{py(t):.2f}" x2="{ML}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{ML - 8}" y="{py(t) + 4:.2f}" text-anchor="end">{escape(lab)}</text>')
    for i, (label, x, y) in enumerate(prepared):
        c = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.5" points="{pts}"/>')
        for a, b in zip(x, y):
            out.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{c}"/>')
        out.append(f'<text x="{ML + 10}" y="{MT + 16 + 14 * i}" fill="{c}">{escape(str(label))}</text>')
    if title:
        out.append(f'<text x="{W / 2}" y="{MT - 14}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{ML + pw / 2}" y="{H - 14}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{MT + ph / 2}" text-anchor="middle" transform="rotate(-90 16 {MT + ph / 2})">{escape(ylabel)}</text>')
    if slope is not None:
        out.append(f'<text class="slope" data-slope="{slope!r}" x="{ML + pw - 8}" y="{MT + ph - 10}" text-anchor="end">slope = {slope:.4f}</text>')
    if annotation:
        out.append(f'<text x="{ML + pw - 8}" y="{MT + 16}" text-anchor="end">{escape(annotation)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(table, kind: str, path, x: str, y, title: str = "", slope=None, labels=None) -> str:
    """Write an SVG plot of columns of a list-of-dicts table; returns the text.

    ``y`` may be one column name or a list of names (one series each).
    """
    if not table:
        raise ValueError("cannot plot an empty table")
    ys = [y] if isinstance(y, str) else list(y)
    labels = ys if labels is None else labels
    series = [(lab, [r[x] for r in table], [r[c] for r in table]) for lab, c in zip(labels, ys)]
    text = svg_plot(series, kind, title, x, ", ".join(ys), slope=slope)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return text
