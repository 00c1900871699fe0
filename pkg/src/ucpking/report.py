"""CSV tables and small self-contained SVG line plots."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np


def _fmt(v) -> str:
    # repr of a Python float round-trips exactly through float()
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, header: list[str], rows) -> Path:
    """Write ``rows`` (dicts keyed by header, or sequences) with full float precision."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            vals = [row[k] for k in header] if isinstance(row, dict) else list(row)
            w.writerow([_fmt(v) for v in vals])
    return path


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Numeric table written by :func:`write_csv`."""
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [dict(zip(header, map(float, r))) for r in reader if r]
    return header, rows


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    return np.arange(math.ceil(lo / step) * step, hi + 0.5 * step, step)


def line_plot_svg(
    path,
    x,
    y,
    xlabel: str = "",
    ylabel: str = "",
    title: str = "",
    vlines=(),
    width: int = 640,
    height: int = 420,
) -> Path:
    """One polyline on linear axes; ``vlines`` are dashed vertical markers."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    left, right, top, bottom = 80, 20, 40, 60
    pw, ph = width - left - right, height - top - bottom
    xs = np.concatenate([x, np.asarray(list(vlines), dtype=float)])
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = min(0.0, float(np.min(y))), float(np.max(y))
    if x1 <= x0:
        x1 = x0 + 1.0
    if y1 <= y0:
        y1 = y0 + 1.0

    def px(v):
        return left + (v - x0) / (x1 - x0) * pw

    def py(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        parts.append(
            f'<text x="{px(t):.2f}" y="{top + ph + 18}" text-anchor="middle">{t:.4g}</text>'
        )
    for t in _ticks(y0, y1):
        parts.append(f'<text x="{left - 6}" y="{py(t) + 4:.2f}" text-anchor="end">{t:.4g}</text>')
    for v in vlines:
        parts.append(
            f'<line x1="{px(v):.2f}" y1="{top}" x2="{px(v):.2f}" y2="{top + ph}" '
            'stroke="gray" stroke-dasharray="5,4"/>'
        )
    pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, y))
    parts.append(f'<polyline fill="none" stroke="steelblue" stroke-width="2" points="{pts}"/>')
    parts.append(
        f'<text x="{left + pw / 2}" y="{height - 15}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    parts.append(
        f'<text x="18" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {top + ph / 2})">{escape(ylabel)}</text>'
    )
    if title:
        parts.append(f'<text x="{left + pw / 2}" y="22" text-anchor="middle">{escape(title)}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(parts) + "\n")
    return path
