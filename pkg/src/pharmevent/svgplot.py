"""Minimal standalone SVG charts (no rendering dependency).

Only the two shapes the reports need: histograms and grouped bar charts
with optional error whiskers. Output is deterministic: coordinates are
formatted with fixed precision.
"""
from __future__ import annotations

import numpy as np

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 20, 40, 50
_COLORS = ("#4878a8", "#d1605e", "#6aa56e", "#e8b04c", "#8a6db1", "#7f7f7f")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="24" text-anchor="middle" font-family="sans-serif" '
        f'font-size="15">{_escape(title)}</text>',
    ]


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def histogram_svg(values, bins: int = 30, title: str = "") -> str:
    """Histogram of a 1-D sample with a dashed mean line."""
    x = np.asarray(list(values), dtype=float)
    counts, edges = np.histogram(x, bins=bins)
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    peak = max(int(counts.max()), 1)
    lines = _header(title)
    span = edges[-1] - edges[0] or 1.0
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        x0 = _ML + (lo - edges[0]) / span * plot_w
        width = max((hi - lo) / span * plot_w - 1.0, 0.5)
        height = c / peak * plot_h
        lines.append(
            f'<rect x="{_fmt(x0)}" y="{_fmt(_MT + plot_h - height)}" '
            f'width="{_fmt(width)}" height="{_fmt(height)}" fill="{_COLORS[0]}"/>'
        )
    mean_x = _ML + (float(x.mean()) - edges[0]) / span * plot_w
    lines.append(
        f'<line x1="{_fmt(mean_x)}" y1="{_MT}" x2="{_fmt(mean_x)}" y2="{_MT + plot_h}" '
        f'stroke="#c03030" stroke-dasharray="6,4"/>'
    )
    lines.append(
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_W - _MR}" y2="{_MT + plot_h}" stroke="black"/>'
    )
    for frac in (0.0, 0.5, 1.0):
        vx = edges[0] + frac * span
        px = _ML + frac * plot_w
        lines.append(
            f'<text x="{_fmt(px)}" y="{_H - 28}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{vx:.3g}</text>'
        )
    lines.append(
        f'<text x="{_ML - 8}" y="{_MT + 4}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{peak}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def bar_chart_svg(
    labels,
    series: dict[str, list[float]],
    errors: dict[str, list[float]] | None = None,
    title: str = "",
    y_max: float | None = None,
) -> str:
    """Grouped bars per label; one color per series; optional error whiskers."""
    labels = list(labels)
    names = list(series)
    plot_w = _W - _ML - _MR
    plot_h = _H - _MT - _MB
    if y_max is None:
        peak = max(
            (v or 0.0) + ((errors or {}).get(n, [0.0] * len(labels))[i] if errors else 0.0)
            for n in names
            for i, v in enumerate(series[n])
        )
        y_max = max(peak, 1e-9) * 1.1
    group_w = plot_w / max(len(labels), 1)
    bar_w = group_w * 0.8 / max(len(names), 1)
    lines = _header(title)
    for si, name in enumerate(names):
        color = _COLORS[si % len(_COLORS)]
        for i, value in enumerate(series[name]):
            if value is None:
                continue
            x0 = _ML + i * group_w + group_w * 0.1 + si * bar_w
            height = max(value, 0.0) / y_max * plot_h
            y0 = _MT + plot_h - height
            lines.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(y0)}" width="{_fmt(bar_w * 0.92)}" '
                f'height="{_fmt(height)}" fill="{color}"/>'
            )
            if errors and name in errors and errors[name][i]:
                cx = x0 + bar_w * 0.46
                err_h = errors[name][i] / y_max * plot_h
                lines.append(
                    f'<line x1="{_fmt(cx)}" y1="{_fmt(y0 - err_h)}" x2="{_fmt(cx)}" '
                    f'y2="{_fmt(min(y0 + err_h, _MT + plot_h))}" stroke="black"/>'
                )
        lines.append(
            f'<rect x="{_ML + 10 + si * 150}" y="{_MT - 14}" width="10" height="10" fill="{color}"/>'
        )
        lines.append(
            f'<text x="{_ML + 24 + si * 150}" y="{_MT - 5}" font-family="sans-serif" '
            f'font-size="11">{_escape(name)}</text>'
        )
    for i, label in enumerate(labels):
        cx = _ML + (i + 0.5) * group_w
        lines.append(
            f'<text x="{_fmt(cx)}" y="{_H - 28}" text-anchor="middle" font-family="sans-serif" '
            f'font-size="10">{_escape(str(label))}</text>'
        )
    lines.append(
        f'<line x1="{_ML}" y1="{_MT + plot_h}" x2="{_W - _MR}" y2="{_MT + plot_h}" stroke="black"/>'
    )
    lines.append(
        f'<text x="{_ML - 8}" y="{_MT + 4}" text-anchor="end" font-family="sans-serif" '
        f'font-size="11">{y_max:.3g}</text>'
    )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
