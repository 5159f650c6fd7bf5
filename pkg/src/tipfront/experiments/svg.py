"""Minimal SVG line and scatter charts with labelled axes."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        step = m * mag
        if raw <= step:
            break
    first = step * -(-lo // step)
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:g}"


@dataclass
class Chart:
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    width: int = 640
    height: int = 420
    margin: int = 56
    series: list = field(default_factory=list)

    def line(self, xs, ys, label: str = "", color: str | None = None):
        self.series.append(("line", list(map(float, xs)), list(map(float, ys)), label, color))
        return self

    def scatter(self, xs, ys, label: str = "", color: str | None = None, values=None):
        """Points; ``values`` in [0, 1] shade each point from blue to red."""
        self.series.append(("scatter", list(map(float, xs)), list(map(float, ys)), label,
                            color if values is None else list(map(float, values))))
        return self

    def _bounds(self):
        xs = [x for s in self.series for x in s[1]]
        ys = [y for s in self.series for y in s[2]]
        if not xs:
            return 0.0, 1.0, 0.0, 1.0
        x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
        if x1 == x0:
            x1 = x0 + 1
        if y1 == y0:
            y1 = y0 + 1
        return x0, x1, y0, y1

    def render(self) -> str:
        W, H, m = self.width, self.height, self.margin
        x0, x1, y0, y1 = self._bounds()

        def px(x):
            return m + (x - x0) / (x1 - x0) * (W - 2 * m)

        def py(y):
            return H - m - (y - y0) / (y1 - y0) * (H - 2 * m)

        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
               f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
               f'<rect width="{W}" height="{H}" fill="white"/>']
        # axes
        out.append(f'<line x1="{m}" y1="{H - m}" x2="{W - m}" y2="{H - m}" stroke="black"/>')
        out.append(f'<line x1="{m}" y1="{m}" x2="{m}" y2="{H - m}" stroke="black"/>')
        for t in _nice_ticks(x0, x1):
            x = px(t)
            out.append(f'<line x1="{x:.2f}" y1="{H - m}" x2="{x:.2f}" y2="{H - m + 4}" stroke="black"/>')
            out.append(f'<text x="{x:.2f}" y="{H - m + 16}" text-anchor="middle">{_fmt(t)}</text>')
        for t in _nice_ticks(y0, y1):
            y = py(t)
            out.append(f'<line x1="{m - 4}" y1="{y:.2f}" x2="{m}" y2="{y:.2f}" stroke="black"/>')
            out.append(f'<text x="{m - 6}" y="{y + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        if self.title:
            out.append(f'<text x="{W / 2}" y="{m / 2}" text-anchor="middle" font-size="14">'
                       f'{escape(self.title)}</text>')
        if self.xlabel:
            out.append(f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle">{escape(self.xlabel)}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{H / 2}" text-anchor="middle" '
                       f'transform="rotate(-90 14 {H / 2})">{escape(self.ylabel)}</text>')

        for k, (kind, xs, ys, label, color) in enumerate(self.series):
            if kind == "line":
                c = color or PALETTE[k % len(PALETTE)]
                pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
                out.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.2" points="{pts}"/>')
            else:
                for i, (x, y) in enumerate(zip(xs, ys)):
                    if isinstance(color, list):
                        v = min(max(color[i], 0.0), 1.0)
                        c = f"rgb({int(255 * v)},0,{int(255 * (1 - v))})"
                    else:
                        c = color or PALETTE[k % len(PALETTE)]
                    out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="{c}"/>')
            if label:
                c = color if isinstance(color, str) else PALETTE[k % len(PALETTE)]
                ly = m + 14 * k
                out.append(f'<text x="{W - m + 4}" y="{ly}" fill="{c}">{escape(label)}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())
