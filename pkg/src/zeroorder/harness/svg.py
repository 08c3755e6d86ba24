"""Minimal line-plot SVG writer for probe tables."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_plot_svg"]

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


def line_plot_svg(x, series: dict, title: str = "", width: int = 640, height: int = 400,
                  path=None) -> str:
    """Polyline chart of each ``series[name]`` against ``x``."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    lo_y = min(float(v.min()) for v in ys.values())
    hi_y = max(float(v.max()) for v in ys.values())
    if hi_y == lo_y:
        hi_y = lo_y + 1.0
    pad = 40

    def sx(v):
        return pad + (v - x.min()) / max(x.max() - x.min(), 1e-300) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - lo_y) / (hi_y - lo_y) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 15}" font-size="10">{x.min():.3g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 15}" font-size="10" text-anchor="end">{x.max():.3g}</text>',
        f'<text x="{pad - 4}" y="{pad}" font-size="10" text-anchor="end">{hi_y:.3g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" font-size="10" text-anchor="end">{lo_y:.3g}</text>',
    ]
    for i, (name, y) in enumerate(ys.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad - 4}" y="{pad + 14 * (i + 1)}" font-size="11" fill="{color}" '
                     f'text-anchor="end">{escape(name)}</text>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
