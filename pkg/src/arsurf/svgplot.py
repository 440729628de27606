"""Minimal deterministic SVG emitter: polylines, points, axes, heatmaps.

No interactivity, no styling beyond stroke/fill: the output reproduces
figure data as static plots with byte-identical files for identical input.
"""

from __future__ import annotations

import numpy as np


def _fmt(x):
    return f"{float(x):.6g}"


class SvgPlot:
    def __init__(self, xlim, ylim, width=640, height=640, title="",
                 margin=50):
        self.xlim = (float(xlim[0]), float(xlim[1]))
        self.ylim = (float(ylim[0]), float(ylim[1]))
        self.width = int(width)
        self.height = int(height)
        self.margin = int(margin)
        self.title = title
        self.elements = []

    def _tx(self, x):
        x0, x1 = self.xlim
        return self.margin + (x - x0) / (x1 - x0) * (self.width
                                                     - 2 * self.margin)

    def _ty(self, y):
        y0, y1 = self.ylim
        return self.height - self.margin - (y - y0) / (y1 - y0) * (
            self.height - 2 * self.margin)

    def polyline(self, pts, stroke="#1f4e8c", width=1.2, dash=None):
        pts = np.asarray(pts, dtype=float)
        if len(pts) < 2:
            return
        coords = " ".join(f"{_fmt(self._tx(p[0]))},{_fmt(self._ty(p[1]))}"
                          for p in pts)
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self.elements.append(
            f'<polyline fill="none" stroke="{stroke}" '
            f'stroke-width="{_fmt(width)}"{dash_attr} points="{coords}"/>')

    def points(self, pts, r=2.5, fill="#c23b22"):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        for p in pts:
            self.elements.append(
                f'<circle cx="{_fmt(self._tx(p[0]))}" '
                f'cy="{_fmt(self._ty(p[1]))}" r="{_fmt(r)}" fill="{fill}"/>')

    def heatmap(self, xs, ys, values, vmin=None, vmax=None):
        """Cell rectangles colored on a blue-white-red scale."""
        values = np.asarray(values, dtype=float)
        finite = values[np.isfinite(values)]
        if vmin is None:
            vmin = float(finite.min()) if finite.size else 0.0
        if vmax is None:
            vmax = float(finite.max()) if finite.size else 1.0
        span = (vmax - vmin) or 1.0
        for i in range(len(xs) - 1):
            for j in range(len(ys) - 1):
                v = values[i, j]
                if not np.isfinite(v):
                    continue
                t = min(1.0, max(0.0, (v - vmin) / span))
                r = int(255 * t)
                b = int(255 * (1 - t))
                g = int(255 * (1 - abs(2 * t - 1)))
                x = self._tx(xs[i])
                y = self._ty(ys[j + 1])
                w = self._tx(xs[i + 1]) - x
                h = self._ty(ys[j]) - y
                self.elements.append(
                    f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
                    f'height="{_fmt(h)}" fill="rgb({r},{g},{b})"/>')

    def _axes(self):
        m = self.margin
        w, h = self.width, self.height
        out = [f'<rect x="{m}" y="{m}" width="{w - 2 * m}" '
               f'height="{h - 2 * m}" fill="none" stroke="#444" '
               f'stroke-width="1"/>']
        for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
            xv = self.xlim[0] + frac * (self.xlim[1] - self.xlim[0])
            yv = self.ylim[0] + frac * (self.ylim[1] - self.ylim[0])
            xp = self._tx(xv)
            yp = self._ty(yv)
            out.append(f'<line x1="{_fmt(xp)}" y1="{h - m}" x2="{_fmt(xp)}" '
                       f'y2="{h - m + 5}" stroke="#444" stroke-width="1"/>')
            out.append(f'<text x="{_fmt(xp)}" y="{h - m + 18}" '
                       f'font-size="11" text-anchor="middle" '
                       f'font-family="monospace">{_fmt(xv)}</text>')
            out.append(f'<line x1="{m - 5}" y1="{_fmt(yp)}" x2="{m}" '
                       f'y2="{_fmt(yp)}" stroke="#444" stroke-width="1"/>')
            out.append(f'<text x="{m - 8}" y="{_fmt(yp + 4)}" font-size="11" '
                       f'text-anchor="end" '
                       f'font-family="monospace">{_fmt(yv)}</text>')
        if self.title:
            out.append(f'<text x="{w // 2}" y="{m - 14}" font-size="14" '
                       f'text-anchor="middle" '
                       f'font-family="monospace">{self.title}</text>')
        return out

    def render(self):
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" '
                f'width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        body = [f'<rect width="{self.width}" height="{self.height}" '
                f'fill="white"/>']
        body += self.elements
        body += self._axes()
        return "\n".join([head] + body + ["</svg>"]) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())
