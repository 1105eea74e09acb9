"""Minimal SVG line plots.

Polyline plots with axes, ticks, and a legend; enough to inspect CoM
velocity and phasing traces without pulling in a plotting stack.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")
_MARGIN_L = 64.0
_MARGIN_R = 16.0
_MARGIN_T = 36.0
_MARGIN_B = 44.0


def _span(values) -> tuple[float, float]:
    lo = min(values)
    hi = max(values)
    if hi - lo < 1e-12:
        lo -= 1.0
        hi += 1.0
    return lo, hi


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    step = (hi - lo) / (count - 1)
    return [lo + i * step for i in range(count)]


def render_plot(series, title: str, x_label: str, y_label: str,
                width: int = 720, height: int = 400) -> str:
    """Render labelled (xs, ys) series to an SVG document string.

    series: iterable of (label, xs, ys); all series share the axes.
    """
    series = [(label, list(xs), list(ys)) for label, xs, ys in series
              if len(xs) and len(xs) == len(ys)]
    if not series:
        raise ValueError("nothing to plot")
    x_lo, x_hi = _span([x for _, xs, _ in series for x in xs])
    y_lo, y_hi = _span([y for _, _, ys in series for y in ys])
    pad = 0.05 * (y_hi - y_lo)
    y_lo -= pad
    y_hi += pad
    plot_w = width - _MARGIN_L - _MARGIN_R
    plot_h = height - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
             f'font-family="sans-serif" font-size="14">{escape(title)}</text>']
    axis = 'stroke="#444" stroke-width="1"'
    parts.append(f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T + plot_h:.1f}" '
                 f'x2="{_MARGIN_L + plot_w:.1f}" '
                 f'y2="{_MARGIN_T + plot_h:.1f}" {axis}/>')
    parts.append(f'<line x1="{_MARGIN_L}" y1="{_MARGIN_T}" '
                 f'x2="{_MARGIN_L}" y2="{_MARGIN_T + plot_h:.1f}" {axis}/>')
    label_font = 'font-family="sans-serif" font-size="11" fill="#222"'
    for tick in _ticks(x_lo, x_hi):
        x = px(tick)
        parts.append(f'<line x1="{x:.1f}" y1="{_MARGIN_T + plot_h:.1f}" '
                     f'x2="{x:.1f}" y2="{_MARGIN_T + plot_h + 5:.1f}" '
                     f'{axis}/>')
        parts.append(f'<text x="{x:.1f}" y="{_MARGIN_T + plot_h + 18:.1f}" '
                     f'text-anchor="middle" {label_font}>{tick:.3g}</text>')
    for tick in _ticks(y_lo, y_hi):
        y = py(tick)
        parts.append(f'<line x1="{_MARGIN_L - 5}" y1="{y:.1f}" '
                     f'x2="{_MARGIN_L}" y2="{y:.1f}" {axis}/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4:.1f}" '
                     f'text-anchor="end" {label_font}>{tick:.3g}</text>')
    parts.append(f'<text x="{_MARGIN_L + plot_w / 2:.1f}" '
                 f'y="{height - 8}" text-anchor="middle" {label_font}>'
                 f'{escape(x_label)}</text>')
    parts.append(f'<text x="16" y="{_MARGIN_T + plot_h / 2:.1f}" '
                 f'text-anchor="middle" {label_font} transform="rotate(-90 '
                 f'16 {_MARGIN_T + plot_h / 2:.1f})">{escape(y_label)}</text>')
    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{px(x):.2f},{py(y):.2f}"
                          for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        ly = _MARGIN_T + 14 + 16 * idx
        lx = _MARGIN_L + plot_w - 130
        parts.append(f'<line x1="{lx:.1f}" y1="{ly - 4:.1f}" '
                     f'x2="{lx + 22:.1f}" y2="{ly - 4:.1f}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28:.1f}" y="{ly:.1f}" {label_font}>'
                     f'{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
