"""Minimal deterministic SVG line charts.

Only what the CLI needs: step or polyline series, linear or log axes, tick
labels, a legend, and a grid of panels. Numbers are printed with a fixed
precision so output is byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf")
DASHES = ("", "4 3", "1 3", "6 2 1 2")


@dataclass
class Series:
    label: str
    points: Sequence[tuple[float, float]]
    step: bool = True


@dataclass
class Panel:
    title: str
    series: list[Series] = field(default_factory=list)
    xlabel: str = "interactivity (tokens/s/user)"
    ylabel: str = "throughput (tokens/s/GPU)"
    logx: bool = False
    logy: bool = False


def _n(v: float) -> str:
    return f"{v:.2f}"


def _tick_label(v: float) -> str:
    if v == 0:
        return "0"
    a = abs(v)
    if a >= 1e4 or a < 1e-2:
        return f"{v:.0e}".replace("e+0", "e").replace("e-0", "e-")
    return f"{v:.3g}"


def _linear_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    first = math.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi * (1 + 1e-9):
        out.append(round(v, 12))
        v += step
    return out


def _log_ticks(lo: float, hi: float) -> list[float]:
    return [10.0 ** k for k in range(math.ceil(math.log10(lo)), math.floor(math.log10(hi)) + 1)]


class _Axis:
    def __init__(self, lo: float, hi: float, log: bool, a: float, b: float):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.log, self.a, self.b = lo, hi, log, a, b

    def __call__(self, v: float) -> float:
        if self.log:
            v = math.log10(v)
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)

    def ticks(self) -> list[float]:
        if self.log:
            return _log_ticks(10 ** self.lo, 10 ** self.hi)
        return _linear_ticks(self.lo, self.hi)


def _bounds(values: list[float], log: bool) -> tuple[float, float]:
    vals = [v for v in values if v > 0] if log else values
    if not vals:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = min(vals), max(vals)
    if log:
        return lo / 1.2, hi * 1.2
    return min(0.0, lo), hi * 1.05 if hi > 0 else 1.0


def _staircase(points: Sequence[tuple[float, float]]) -> list[tuple[float, float]]:
    # each point holds its throughput for every interactivity up to its own
    out: list[tuple[float, float]] = []
    for i, (x, y) in enumerate(points):
        if i:
            out.append((points[i - 1][0], y))
        out.append((x, y))
    return out


def _panel(p: Panel, ox: float, oy: float, w: float, h: float) -> list[str]:
    ml, mr, mt, mb = 64, 12, 28, 44
    xs = [x for s in p.series for x, _ in s.points]
    ys = [y for s in p.series for _, y in s.points]
    ax = _Axis(*_bounds(xs, p.logx), p.logx, ox + ml, ox + w - mr)
    ay = _Axis(*_bounds(ys, p.logy), p.logy, oy + h - mb, oy + mt)
    out = [
        f'<text x="{_n(ox + w / 2)}" y="{_n(oy + 16)}" text-anchor="middle" font-weight="bold">{escape(p.title)}</text>',
        f'<rect x="{_n(ox + ml)}" y="{_n(oy + mt)}" width="{_n(w - ml - mr)}" height="{_n(h - mt - mb)}" fill="none" stroke="#444"/>',
    ]
    for t in ax.ticks():
        x = ax(t)
        out.append(f'<line x1="{_n(x)}" y1="{_n(oy + h - mb)}" x2="{_n(x)}" y2="{_n(oy + h - mb + 4)}" stroke="#444"/>')
        out.append(f'<text x="{_n(x)}" y="{_n(oy + h - mb + 16)}" text-anchor="middle">{_tick_label(t)}</text>')
    for t in ay.ticks():
        y = ay(t)
        out.append(f'<line x1="{_n(ox + ml - 4)}" y1="{_n(y)}" x2="{_n(ox + ml)}" y2="{_n(y)}" stroke="#444"/>')
        out.append(f'<text x="{_n(ox + ml - 6)}" y="{_n(y + 4)}" text-anchor="end">{_tick_label(t)}</text>')
    out.append(f'<text x="{_n(ox + (w + ml - mr) / 2)}" y="{_n(oy + h - 8)}" text-anchor="middle">{escape(p.xlabel)}</text>')
    cy = oy + (h + mt - mb) / 2
    out.append(f'<text x="{_n(ox + 14)}" y="{_n(cy)}" text-anchor="middle" transform="rotate(-90 {_n(ox + 14)} {_n(cy)})">{escape(p.ylabel)}</text>')
    for i, s in enumerate(p.series):
        color, dash = PALETTE[i % len(PALETTE)], DASHES[i % len(DASHES)]
        pts = [(x, y) for x, y in s.points if (x > 0 or not p.logx) and (y > 0 or not p.logy)]
        path = _staircase(pts) if s.step else list(pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        if path:
            coords = " ".join(f"{_n(ax(x))},{_n(ay(y))}" for x, y in path)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"{dash_attr}/>')
        for x, y in pts:
            out.append(f'<circle cx="{_n(ax(x))}" cy="{_n(ay(y))}" r="2.5" fill="{color}"/>')
        ly = oy + mt + 14 + 16 * i
        lx = ox + w - mr - 150
        out.append(f'<line x1="{_n(lx)}" y1="{_n(ly - 4)}" x2="{_n(lx + 18)}" y2="{_n(ly - 4)}" stroke="{color}" stroke-width="2"{dash_attr}/>')
        out.append(f'<text x="{_n(lx + 24)}" y="{_n(ly)}">{escape(s.label)}</text>')
    return out


def render(panels: Sequence[Panel], *, columns: int = 2, panel_w: float = 480, panel_h: float = 340) -> str:
    """One SVG document laying ``panels`` out in a grid."""
    if not panels:
        raise ValueError("nothing to plot")
    cols = max(1, min(columns, len(panels)))
    rows = math.ceil(len(panels) / cols)
    w, h = cols * panel_w, rows * panel_h
    body = []
    for k, p in enumerate(panels):
        body += _panel(p, (k % cols) * panel_w, (k // cols) * panel_h, panel_w, panel_h)
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(w)}" height="{_n(h)}" '
        f'viewBox="0 0 {_n(w)} {_n(h)}" font-family="sans-serif" font-size="11">'
    )
    return "\n".join([head, f'<rect width="{_n(w)}" height="{_n(h)}" fill="white"/>', *body, "</svg>"]) + "\n"
