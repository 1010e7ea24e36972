"""Hand-rolled SVG line charts for run diagnostics. Log-scale y axis."""
from __future__ import annotations

import math
from typing import Sequence

_WIDTH, _HEIGHT = 840, 520
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 40, 50
_COLORS = ("#c0392b", "#2471a3", "#1e8449", "#7d3c98")


def _ticks(lo_exp: int, hi_exp: int) -> list[int]:
    span = max(hi_exp - lo_exp, 1)
    step = max(1, span // 6)
    return list(range(lo_exp, hi_exp + 1, step))


def write_log_line_chart(path, series: dict[str, tuple[Sequence[float], Sequence[float]]],
                         *, title: str, x_label: str, y_label: str) -> None:
    """Overlay one polyline per series on a log10 y axis.

    Nonpositive y values cannot be drawn on a log axis and are skipped.
    """
    points = {}
    all_x, all_y = [], []
    for label, (xs, ys) in series.items():
        kept = [(float(x), float(y)) for x, y in zip(xs, ys)
                if y > 0.0 and math.isfinite(y)]
        points[label] = kept
        all_x.extend(x for x, _ in kept)
        all_y.extend(y for _, y in kept)
    if not all_y:
        all_x, all_y = [0.0, 1.0], [1.0, 1.0]
        points = {label: [] for label in series}

    x_lo, x_hi = min(all_x), max(all_x)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    y_lo_exp = math.floor(math.log10(min(all_y)))
    y_hi_exp = math.ceil(math.log10(max(all_y)))
    if y_hi_exp == y_lo_exp:
        y_hi_exp += 1

    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        e = math.log10(y)
        return _MARGIN_T + (y_hi_exp - e) / (y_hi_exp - y_lo_exp) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<title>{title}</title>',
        f'<text x="{_WIDTH / 2:.0f}" y="24" text-anchor="middle" font-size="16">{title}</text>',
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#888"/>',
    ]

    parts.append(f'<g id="y-axis" data-scale="log10" font-size="11">')
    for e in _ticks(y_lo_exp, y_hi_exp):
        y = py(10.0 ** e)
        parts.append(f'<line x1="{_MARGIN_L - 4}" y1="{y:.1f}" x2="{_MARGIN_L}" '
                     f'y2="{y:.1f}" stroke="#444"/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4:.1f}" text-anchor="end">1e{e}</text>')
    parts.append(f'<text x="16" y="{_MARGIN_T + plot_h / 2:.0f}" font-size="12" '
                 f'transform="rotate(-90 16 {_MARGIN_T + plot_h / 2:.0f})" '
                 f'text-anchor="middle">{y_label}</text>')
    parts.append('</g>')

    parts.append('<g id="x-axis" font-size="11">')
    n_xticks = 6
    for j in range(n_xticks + 1):
        x_val = x_lo + (x_hi - x_lo) * j / n_xticks
        x = px(x_val)
        parts.append(f'<line x1="{x:.1f}" y1="{_MARGIN_T + plot_h}" x2="{x:.1f}" '
                     f'y2="{_MARGIN_T + plot_h + 4}" stroke="#444"/>')
        parts.append(f'<text x="{x:.1f}" y="{_MARGIN_T + plot_h + 18}" '
                     f'text-anchor="middle">{x_val:.0f}</text>')
    parts.append(f'<text x="{_MARGIN_L + plot_w / 2:.0f}" y="{_HEIGHT - 12}" font-size="12" '
                 f'text-anchor="middle">{x_label}</text>')
    parts.append('</g>')

    for idx, (label, pts) in enumerate(points.items()):
        color = _COLORS[idx % len(_COLORS)]
        coords = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        parts.append(f'<polyline class="series" data-label="{label}" points="{coords}" '
                     f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = _MARGIN_T + 16 + 16 * idx
        parts.append(f'<line x1="{_MARGIN_L + plot_w - 150}" y1="{ly - 4}" '
                     f'x2="{_MARGIN_L + plot_w - 126}" y2="{ly - 4}" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{_MARGIN_L + plot_w - 120}" y="{ly}" font-size="11">{label}</text>')

    parts.append('</svg>')
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
