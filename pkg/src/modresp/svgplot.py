"""Minimal deterministic SVG line/scatter plots.

Only what the reports need: panels with linear or log-x axes, polylines,
reference lines, markers and labels. Numbers are written with fixed
precision so identical data give identical bytes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = {"gain": "#1f5fbf", "nonlti": "#d9a400", "random": "#c8312b",
           "bw": "#555555", "td": "#2a9d3a"}
SCATTER_COLORS = ("#1f5fbf", "#c8312b", "#2a9d3a", "#d9a400", "#7a3fbf", "#e07b00",
                  "#008b8b", "#8b4513", "#ff1493", "#556b2f", "#4682b4", "#b22222",
                  "#9acd32", "#6a5acd", "#20b2aa", "#696969")


def _n(v: float) -> str:
    return f"{v:.2f}"


@dataclass
class Panel:
    x0: float
    y0: float
    width: float
    height: float
    xlim: tuple[float, float]
    ylim: tuple[float, float]
    logx: bool = False
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    items: list[str] = field(default_factory=list)

    def _fx(self, x):
        lo, hi = self.xlim
        if self.logx:
            x, lo, hi = math.log10(x), math.log10(lo), math.log10(hi)
        return self.x0 + (x - lo) / (hi - lo) * self.width

    def _fy(self, y):
        lo, hi = self.ylim
        y = min(max(y, lo), hi)
        return self.y0 + self.height - (y - lo) / (hi - lo) * self.height

    def _inside_x(self, x):
        return (x > 0 or not self.logx) and self.xlim[0] <= x <= self.xlim[1]

    def line(self, xs, ys, color: str, width: float = 1.2, dash: str | None = None):
        pts = [f"{_n(self._fx(x))},{_n(self._fy(y))}" for x, y in zip(xs, ys)
               if self._inside_x(x) and math.isfinite(y)]
        if len(pts) < 2:
            return
        style = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
                          f'{style} points="{" ".join(pts)}"/>')

    def vline(self, x, color: str, dash: str = "4,3"):
        if self._inside_x(x):
            px = _n(self._fx(x))
            self.items.append(f'<line x1="{px}" y1="{_n(self.y0)}" x2="{px}" '
                              f'y2="{_n(self.y0 + self.height)}" stroke="{color}" '
                              f'stroke-dasharray="{dash}"/>')

    def hline(self, y, color: str, dash: str = "4,3"):
        if math.isfinite(y):
            py = _n(self._fy(y))
            self.items.append(f'<line x1="{_n(self.x0)}" y1="{py}" x2="{_n(self.x0 + self.width)}" '
                              f'y2="{py}" stroke="{color}" stroke-dasharray="{dash}"/>')

    def point(self, x, y, color: str, label: str = "", r: float = 4.0):
        if not (math.isfinite(x) and math.isfinite(y) and self._inside_x(x)):
            return
        px, py = self._fx(x), self._fy(y)
        self.items.append(f'<circle class="point" cx="{_n(px)}" cy="{_n(py)}" r="{r}" fill="{color}"/>')
        if label:
            self.items.append(f'<text x="{_n(px + 6)}" y="{_n(py - 4)}" font-size="9">'
                              f'{escape(label)}</text>')

    def text(self, x_frac, y_frac, s: str, size: int = 9, color: str = "#000"):
        self.items.append(f'<text x="{_n(self.x0 + x_frac * self.width)}" '
                          f'y="{_n(self.y0 + y_frac * self.height)}" font-size="{size}" '
                          f'fill="{color}">{escape(s)}</text>')

    def _ticks(self, lo, hi, log):
        if log:
            out, d = [], math.floor(math.log10(lo))
            while 10 ** d <= hi * 1.0001:
                for m in (1, 2, 5):
                    v = m * 10 ** d
                    if lo <= v <= hi:
                        out.append(v)
                d += 1
            return out
        span = hi - lo
        step = 10 ** math.floor(math.log10(span / 4))
        for m in (1, 2, 5, 10):
            if span / (m * step) <= 8:
                step *= m
                break
        start = math.ceil(lo / step) * step
        return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]

    def render(self) -> str:
        out = [f'<rect x="{_n(self.x0)}" y="{_n(self.y0)}" width="{_n(self.width)}" '
               f'height="{_n(self.height)}" fill="#fff" stroke="#000"/>']
        for v in self._ticks(*self.xlim, self.logx):
            px = _n(self._fx(v))
            out.append(f'<line x1="{px}" y1="{_n(self.y0)}" x2="{px}" '
                       f'y2="{_n(self.y0 + self.height)}" stroke="#ddd"/>')
            out.append(f'<text x="{px}" y="{_n(self.y0 + self.height + 11)}" font-size="8" '
                       f'text-anchor="middle">{v:g}</text>')
        for v in self._ticks(*self.ylim, False):
            py = _n(self._fy(v))
            out.append(f'<line x1="{_n(self.x0)}" y1="{py}" x2="{_n(self.x0 + self.width)}" '
                       f'y2="{py}" stroke="#ddd"/>')
            out.append(f'<text x="{_n(self.x0 - 3)}" y="{py}" font-size="8" '
                       f'text-anchor="end">{v:g}</text>')
        if self.title:
            out.append(f'<text x="{_n(self.x0 + self.width / 2)}" y="{_n(self.y0 - 5)}" '
                       f'font-size="10" text-anchor="middle">{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{_n(self.x0 + self.width / 2)}" '
                       f'y="{_n(self.y0 + self.height + 23)}" font-size="9" '
                       f'text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            cx, cy = self.x0 - 28, self.y0 + self.height / 2
            out.append(f'<text x="{_n(cx)}" y="{_n(cy)}" font-size="9" text-anchor="middle" '
                       f'transform="rotate(-90 {_n(cx)} {_n(cy)})">{escape(self.ylabel)}</text>')
        out.append(f'<g clip-path="none">{"".join(self.items)}</g>')
        return "\n".join(out)


class Figure:
    def __init__(self, width: float, height: float):
        self.width, self.height = width, height
        self.panels: list[Panel] = []
        self.labels: list[str] = []

    def text(self, x: float, y: float, s: str, size: int = 12):
        self.labels.append(f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}">{escape(s)}</text>')

    def panel(self, *args, **kwargs) -> Panel:
        p = Panel(*args, **kwargs)
        self.panels.append(p)
        return p

    def to_svg(self) -> str:
        body = "\n".join([p.render() for p in self.panels] + self.labels)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(self.width)}" '
                f'height="{_n(self.height)}" viewBox="0 0 {_n(self.width)} {_n(self.height)}" '
                f'font-family="sans-serif">\n<rect width="100%" height="100%" fill="#fff"/>\n'
                f'{body}\n</svg>\n')
