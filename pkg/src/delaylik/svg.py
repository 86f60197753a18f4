"""Minimal deterministic SVG line plots.

Output depends only on the data and style: fixed canvas, fixed number
formatting, no timestamps, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .io import read_csv

__all__ = ["emit_svg", "svg_from_csv"]

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _segments(px, py):
    """Split a polyline wherever a coordinate is not finite."""
    seg = []
    for a, b in zip(px, py):
        if math.isfinite(a) and math.isfinite(b):
            seg.append((a, b))
        elif seg:
            yield seg
            seg = []
    if seg:
        yield seg


def emit_svg(x, series: dict, title: str = "", xlabel: str = "", ylabel: str = "",
             width: int = 720, height: int = 440, log_y: bool = False) -> str:
    """Render one or more ``y(x)`` series as an SVG document string.

    Non-finite points break the line; a series with a single finite point
    is drawn as a marker.
    """
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if log_y:
        ys = {k: np.where(v > 0, np.log10(np.where(v > 0, v, 1.0)), np.nan)
              for k, v in ys.items()}
        ylabel = f"log10 {ylabel}".strip()
    left, right, top, bottom = 80, 20, 40, 60
    pw, ph = width - left - right, height - top - bottom

    fx = x[np.isfinite(x)]
    fy = np.concatenate([v[np.isfinite(v)] for v in ys.values()]) if ys else np.array([])
    x0, x1 = (float(fx.min()), float(fx.max())) if fx.size else (0.0, 1.0)
    y0, y1 = (float(fy.min()), float(fy.max())) if fy.size else (0.0, 1.0)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - v) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for i in range(5):
        tx = x0 + (x1 - x0) * i / 4
        ty = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{_fmt(sx(tx))}" y="{height - bottom + 18}" font-size="11" '
                   f'text-anchor="middle">{_tick(tx)}</text>')
        out.append(f'<text x="{left - 6}" y="{_fmt(sy(ty) + 4)}" font-size="11" '
                   f'text-anchor="end">{_tick(ty)}</text>')
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" font-size="14" '
                   f'text-anchor="middle">{_escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 16}" font-size="12" '
                   f'text-anchor="middle">{_escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{top + ph / 2:.1f}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2:.1f})">{_escape(ylabel)}</text>')

    for k, (name, y) in enumerate(ys.items()):
        colour = _COLOURS[k % len(_COLOURS)]
        for seg in _segments(sx(x), sy(y)):
            if len(seg) == 1:
                a, b = seg[0]
                out.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="3" fill="{colour}"/>')
            else:
                pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in seg)
                out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" '
                           f'points="{pts}"/>')
        out.append(f'<text x="{left + 8}" y="{top + 16 + 14 * k}" font-size="11" '
                   f'fill="{colour}">{_escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def svg_from_csv(csv_path, out_path=None, x_col: str | None = None, y_cols=None,
                 **style) -> str:
    """Plot columns of a numeric CSV; the first column is x unless ``x_col`` is given."""
    header, data = read_csv(csv_path)
    if data.shape[0] == 0:
        raise ValueError(f"{csv_path}: no data rows")
    x_col = x_col or header[0]
    if x_col not in header:
        raise KeyError(f"column {x_col!r} not in {header}")
    y_cols = [c for c in header if c != x_col] if y_cols is None else list(y_cols)
    if not y_cols:
        raise ValueError("need at least one y column")
    for c in y_cols:
        if c not in header:
            raise KeyError(f"column {c!r} not in {header}")
    style.setdefault("xlabel", x_col)
    svg = emit_svg(data[:, header.index(x_col)],
                   {c: data[:, header.index(c)] for c in y_cols}, **style)
    if out_path is not None:
        Path(out_path).write_text(svg, encoding="utf-8")
    return svg
