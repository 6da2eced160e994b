"""CSV and static SVG writers with byte-deterministic output."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import ConfigError, InvalidInputError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")
PANEL_W, PANEL_H = 480, 320
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 32, 48


def format_value(v) -> str:
    """Shortest round-trip text for floats; ``repr`` already guarantees that."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(float(v))
    if hasattr(v, "item"):  # numpy scalar
        return format_value(v.item())
    return str(v)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write ``header`` then ``rows``; every row must match the header width."""
    n = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            row = tuple(row)
            if len(row) != len(header):
                raise InvalidInputError(f"row width {len(row)} != header width {len(header)}")
            w.writerow([format_value(v) for v in row])
            n += 1
    return n


def _num(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _tick(v: float) -> str:
    return f"{v:.4g}"


def _check_series(series: Mapping[str, Sequence]) -> None:
    if not series:
        raise ConfigError("no series to plot")
    for name, pts in series.items():
        if len(pts) == 0:
            raise ConfigError(f"series {name!r} is empty")
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise InvalidInputError(f"series {name!r} has a non-finite point")


def _panel(series, ox: float, title: str, xlabel: str, ylabel: str) -> list[str]:
    xs = [float(x) for pts in series.values() for x, _ in pts]
    ys = [float(y) for pts in series.values() for _, y in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pw = PANEL_W - MARGIN_L - MARGIN_R
    ph = PANEL_H - MARGIN_T - MARGIN_B
    left, top = ox + MARGIN_L, MARGIN_T
    sx = lambda x: left + (x - x0) / (x1 - x0) * pw
    sy = lambda y: top + ph - (y - y0) / (y1 - y0) * ph

    out = [f'<g class="panel">']
    out.append(
        f'<rect x="{_num(left)}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#000"/>'
    )
    for i in range(5):
        fx, fy = x0 + (x1 - x0) * i / 4, y0 + (y1 - y0) * i / 4
        out.append(
            f'<text x="{_num(sx(fx))}" y="{top + ph + 16}" text-anchor="middle">{_tick(fx)}</text>'
        )
        out.append(
            f'<text x="{_num(left - 6)}" y="{_num(sy(fy) + 4)}" text-anchor="end">{_tick(fy)}</text>'
        )
    out.append(
        f'<text x="{_num(left + pw / 2)}" y="{PANEL_H - 8}" text-anchor="middle">{escape(xlabel)}</text>'
    )
    out.append(
        f'<text x="{_num(ox + 14)}" y="{_num(top + ph / 2)}" text-anchor="middle" '
        f'transform="rotate(-90 {_num(ox + 14)} {_num(top + ph / 2)})">{escape(ylabel)}</text>'
    )
    out.append(f'<text x="{_num(left + pw / 2)}" y="20" text-anchor="middle">{escape(title)}</text>')
    for i, (name, pts) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_num(sx(float(x)))},{_num(sy(float(y)))}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = top + 14 + 16 * i
        out.append(
            f'<line x1="{_num(left + pw - 110)}" y1="{ly}" x2="{_num(left + pw - 90)}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{_num(left + pw - 86)}" y="{ly + 4}">{escape(str(name))}</text>')
    out.append("</g>")
    return out


def emit_svg_panels(panels: Sequence, path) -> None:
    """Side-by-side panels; each entry is ``(title, series, xlabel, ylabel)``.

    ``series`` maps a legend name to a list of ``(x, y)`` points.
    """
    if not panels:
        raise ConfigError("no panels to plot")
    for p in panels:
        _check_series(p[1])
    width = PANEL_W * len(panels)
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{PANEL_H}" '
        f'viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{PANEL_H}" fill="#fff"/>',
    ]
    for i, (title, series, xlabel, ylabel) in enumerate(panels):
        lines += _panel(series, PANEL_W * i, title, xlabel, ylabel)
    lines.append("</svg>")
    Path(path).write_text("\n".join(lines) + "\n")


def emit_svg_lineplot(series: Mapping[str, Sequence], path, title: str = "", xlabel: str = "x",
                      ylabel: str = "y") -> None:
    emit_svg_panels([(title, series, xlabel, ylabel)], path)
