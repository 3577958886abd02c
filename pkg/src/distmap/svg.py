"""Self-contained SVG bar charts; no rendering dependency, diffable in tests.

The geometry is recoverable: the svg root carries data-plot-height and
data-ymax, each bar carries its pixel height plus a data-value attribute,
so bar_height_px / plot_height * ymax reproduces the plotted value.
"""

from __future__ import annotations

import numpy as np

WIDTH = 640
HEIGHT = 400
MARGIN_LEFT = 52
MARGIN_RIGHT = 16
MARGIN_TOP = 20
MARGIN_BOTTOM = 44


def histogram_svg(heights, title: str = "", reference: float = 1.0) -> str:
    """Bar chart of k equal-width bins on [0, 1] with a reference line."""
    h = np.asarray(heights, dtype=np.float64)
    k = h.size
    if k == 0:
        raise ValueError("no bins to plot")
    plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    ymax = max(float(h.max()), reference) * 1.1
    if ymax <= 0.0:
        ymax = 1.0

    def ypix(v: float) -> float:
        return MARGIN_TOP + plot_h * (1.0 - v / ymax)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" data-plot-height="{plot_h}" data-ymax="{ymax:.9g}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{WIDTH / 2:.1f}" y="14" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{_esc(title)}</text>'
        )
    bar_w = plot_w / k
    for j in range(k):
        v = float(h[j])
        x = MARGIN_LEFT + j * bar_w
        bh = plot_h * v / ymax
        parts.append(
            f'<rect class="bar" x="{x:.6f}" y="{ypix(v):.6f}" width="{bar_w:.6f}" '
            f'height="{bh:.6f}" fill="#4878a8" stroke="white" stroke-width="0.5" '
            f'data-value="{v:.9g}"/>'
        )
    yref = ypix(reference)
    parts.append(
        f'<line class="reference" x1="{MARGIN_LEFT}" y1="{yref:.6f}" '
        f'x2="{MARGIN_LEFT + plot_w}" y2="{yref:.6f}" stroke="#c03028" '
        f'stroke-width="1" stroke-dasharray="6 3"/>'
    )
    # axes
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
        f'y2="{MARGIN_TOP + plot_h}" stroke="black" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP + plot_h}" '
        f'x2="{MARGIN_LEFT + plot_w}" y2="{MARGIN_TOP + plot_h}" stroke="black" stroke-width="1"/>'
    )
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        x = MARGIN_LEFT + plot_w * frac
        parts.append(
            f'<line x1="{x:.1f}" y1="{MARGIN_TOP + plot_h}" x2="{x:.1f}" '
            f'y2="{MARGIN_TOP + plot_h + 4}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{MARGIN_TOP + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{frac:g}</text>'
        )
    for v in (0.0, reference, ymax / 1.1):
        parts.append(
            f'<text x="{MARGIN_LEFT - 6}" y="{ypix(v) + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{v:.2f}</text>'
        )
    parts.append(
        f'<text x="{MARGIN_LEFT + plot_w / 2:.1f}" y="{HEIGHT - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">unit interval</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
