"""Minimal deterministic SVG line plots (no timestamps, fixed number formatting)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

from .metrics import read_csv

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")


@dataclass
class PlotSpec:
    x: str
    y: str
    group: str | None = None
    title: str = ""
    aggregate: bool = True
    logx: bool = False
    logy: bool = False


def emit_plot(csv_path: str | Path, spec: PlotSpec, out_path: str | Path) -> Path:
    """Render one line per ``group`` value plus, optionally, their pointwise mean."""
    rows = read_csv(csv_path)
    if rows:
        missing = [c for c in (spec.x, spec.y, spec.group) if c and c not in rows[0]]
        if missing:
            raise ValueError(f"{csv_path} lacks column(s) {', '.join(missing)}")
    series: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        try:
            xv, yv = float(r[spec.x]), float(r[spec.y])
        except (TypeError, ValueError):
            continue
        if not (math.isfinite(xv) and math.isfinite(yv)):
            continue
        if (spec.logx and xv <= 0) or (spec.logy and yv <= 0):
            continue
        series.setdefault(r[spec.group] if spec.group else "", []).append((xv, yv))
    for pts in series.values():
        pts.sort()
    if spec.aggregate and len(series) > 1:
        series = dict(series)
        series["mean"] = _mean_curve(series.values())
    svg = render_svg(series, spec)
    out_path = Path(out_path)
    out_path.write_text(svg, encoding="utf-8")
    return out_path


def _mean_curve(curves) -> list[tuple[float, float]]:
    acc: dict[float, list[float]] = {}
    for pts in curves:
        for x, y in pts:
            acc.setdefault(x, []).append(y)
    return [(x, sum(v) / len(v)) for x, v in sorted(acc.items())]


def _fmt(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.2g}"
    return f"{v:.4g}"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    out, t = [], start
    while t <= hi + 1e-9 * step:
        out.append(round(t, 12))
        t += step
    return out


def render_svg(series: dict, spec: PlotSpec) -> str:
    tx = (lambda v: math.log10(v)) if spec.logx else (lambda v: v)
    ty = (lambda v: math.log10(v)) if spec.logy else (lambda v: v)
    pts = [(tx(x), ty(y)) for s in series.values() for x, y in s]
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="15">{escape(spec.title)}</text>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>']
    xlabel = ("log10 " if spec.logx else "") + spec.x
    ylabel = ("log10 " if spec.logy else "") + spec.y
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">'
               f'{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    if not pts:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
                   f'font-size="14" fill="gray">no data</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(p[1] for p in pts), max(p[1] for p in pts)
    # degenerate ranges get a unit-wide window so scaling never divides by zero
    if x1 - x0 <= 0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 <= 0:
        y0, y1 = y0 - 0.5, y1 + 0.5

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + ph - (v - y0) / (y1 - y0) * ph

    for t in _ticks(x0, x1):
        out.append(f'<line x1="{sx(t):.2f}" y1="{TOP + ph}" x2="{sx(t):.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(t):.2f}" y="{TOP + ph + 18}" text-anchor="middle" font-size="10">{_fmt(t)}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{LEFT - 5}" y1="{sy(t):.2f}" x2="{LEFT}" y2="{sy(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{sy(t) + 3:.2f}" text-anchor="end" font-size="10">{_fmt(t)}</text>')
    for i, (name, s) in enumerate(series.items()):
        colour, width = ("black", 2.5) if name == "mean" else (PALETTE[i % len(PALETTE)], 1.2)
        coords = " ".join(f"{sx(tx(x)):.2f},{sy(ty(y)):.2f}" for x, y in s)
        if len(s) == 1:
            cx, cy = coords.split(",")
            out.append(f'<circle cx="{cx}" cy="{cy}" r="3" fill="{colour}"/>')
        else:
            out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="{width}" points="{coords}"/>')
        if name:
            out.append(f'<text x="{LEFT + pw - 4}" y="{TOP + 12 + 12 * i}" text-anchor="end" font-size="10" '
                       f'fill="{colour}">{escape(str(name))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
