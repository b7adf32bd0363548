"""Minimal deterministic SVG scatter-plus-curve writer for fit reports.

Hand-rolled rather than matplotlib so artifact bytes are stable across
library versions and marker counts are exactly the data points.
"""

import math
from pathlib import Path

WIDTH, HEIGHT = 640, 480
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 50


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw_step = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw_step))
    for mult in (1, 2, 2.5, 5, 10):
        step = mult * mag
        if step >= raw_step:
            break
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-12 * abs(hi):
        ticks.append(round(t, 12))
        t += step
    return ticks or [lo, hi]


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def scatter_with_curve(path, xs, ys, curve_xs=None, curve_ys=None, title: str = "",
                       xlabel: str = "", ylabel: str = "", logx: bool = False) -> None:
    """Write a scatter plot (one <circle> per point) with an optional curve."""
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    if logx:
        xs = [math.log10(x) for x in xs]
    all_x = list(xs) + ([math.log10(x) for x in curve_xs] if (logx and curve_xs)
                        else list(curve_xs or []))
    all_y = list(ys) + list(curve_ys or [])
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = min(all_y), max(all_y)
    x_pad = 0.05 * (x_hi - x_lo or 1.0)
    y_pad = 0.05 * (y_hi - y_lo or 1.0)
    x_lo, x_hi = x_lo - x_pad, x_hi + x_pad
    y_lo, y_hi = y_lo - y_pad, y_hi + y_pad

    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B

    def px(x):
        return MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return MARGIN_T + (y_hi - y) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#444" stroke-width="1"/>',
    ]
    if title:
        parts.append(f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="15">{_esc(title)}</text>')
    for t in _nice_ticks(x_lo, x_hi):
        x = px(t)
        label = f"1e{t:g}" if logx else f"{t:g}"
        parts.append(f'<line x1="{x:.1f}" y1="{MARGIN_T + plot_h}" x2="{x:.1f}" '
                     f'y2="{MARGIN_T + plot_h + 5}" stroke="#444"/>')
        parts.append(f'<text x="{x:.1f}" y="{MARGIN_T + plot_h + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{_esc(label)}</text>')
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        parts.append(f'<line x1="{MARGIN_L - 5}" y1="{y:.1f}" x2="{MARGIN_L}" y2="{y:.1f}" '
                     f'stroke="#444"/>')
        parts.append(f'<text x="{MARGIN_L - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{t:g}</text>')
    if xlabel:
        parts.append(f'<text x="{MARGIN_L + plot_w / 2:.1f}" y="{HEIGHT - 12}" '
                     f'text-anchor="middle" font-family="sans-serif" font-size="13">'
                     f'{_esc(xlabel)}</text>')
    if ylabel:
        cy = MARGIN_T + plot_h / 2
        parts.append(f'<text x="18" y="{cy:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13" '
                     f'transform="rotate(-90 18 {cy:.1f})">{_esc(ylabel)}</text>')
    if curve_xs is not None and curve_ys is not None:
        cxs = [math.log10(x) for x in curve_xs] if logx else [float(x) for x in curve_xs]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(cxs, curve_ys))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="black" stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="4" fill="#4682b4" '
                     f'fill-opacity="0.8" stroke="#2d5a7b"/>')
    parts.append("</svg>")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")
