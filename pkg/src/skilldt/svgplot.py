"""Tiny dependency-free SVG emitter for trajectory and histogram figures."""
from __future__ import annotations

import numpy as np

_COLORS = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def color(i: int) -> str:
    return _COLORS[i % len(_COLORS)]


class SvgCanvas:
    def __init__(self, width: int = 480, height: int = 480,
                 xlim=(-1.1, 1.1), ylim=(-1.1, 1.1)):
        self.width = width
        self.height = height
        self.xlim = xlim
        self.ylim = ylim
        self.parts: list[str] = []

    def _map(self, x: float, y: float) -> tuple[float, float]:
        px = (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * self.width
        py = (1.0 - (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0])) * self.height
        return px, py

    def polyline(self, points: np.ndarray, stroke: str, width: float = 1.5,
                 opacity: float = 1.0) -> None:
        coords = " ".join(
            f"{px:.2f},{py:.2f}" for px, py in (self._map(x, y) for x, y in points)
        )
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{stroke}" '
            f'stroke-width="{width}" stroke-opacity="{opacity}"/>'
        )

    def circle(self, x: float, y: float, r_px: float, fill: str,
               opacity: float = 1.0) -> None:
        px, py = self._map(x, y)
        self.parts.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="{r_px:.2f}" '
            f'fill="{fill}" fill-opacity="{opacity}"/>'
        )

    def rect(self, xmin: float, xmax: float, ymin: float, ymax: float,
             fill: str = "#444444") -> None:
        px0, py1 = self._map(xmin, ymin)
        px1, py0 = self._map(xmax, ymax)
        self.parts.append(
            f'<rect x="{px0:.2f}" y="{py0:.2f}" width="{px1 - px0:.2f}" '
            f'height="{py1 - py0:.2f}" fill="{fill}"/>'
        )

    def text(self, x: float, y: float, s: str, size: int = 12,
             fill: str = "#000000") -> None:
        px, py = self._map(x, y)
        self.parts.append(
            f'<text x="{px:.2f}" y="{py:.2f}" font-size="{size}" '
            f'fill="{fill}" font-family="sans-serif">{s}</text>'
        )

    def save(self, path) -> None:
        body = "\n".join(self.parts)
        with open(path, "w", encoding="utf-8") as f:
            f.write(
                f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" '
                f'height="{self.height}" viewBox="0 0 {self.width} {self.height}">\n'
                f'<rect width="100%" height="100%" fill="#ffffff"/>\n'
                f"{body}\n</svg>\n"
            )


def plot_trajectory_overlay(path, curves, env=None, title: str = "") -> None:
    """Overlay labeled 2-D paths; draws env walls and goal when given."""
    canvas = SvgCanvas()
    if env is not None:
        for rect in getattr(env, "walls", []):
            canvas.rect(rect[0], rect[1], rect[2], rect[3])
        goal = getattr(env, "goal", None)
        if goal is not None:
            canvas.circle(float(goal[0]), float(goal[1]), 8.0, "#2ca02c", opacity=0.4)
    for i, (states, label) in enumerate(curves):
        c = color(i)
        canvas.polyline(np.asarray(states)[:, :2], c)
        canvas.circle(float(states[-1][0]), float(states[-1][1]), 4.0, c)
        canvas.text(-1.05, 1.02 - 0.08 * i, label, fill=c)
    if title:
        canvas.text(-1.05, -1.05, title)
    canvas.save(path)


def plot_histograms(path, histograms, labels, title: str = "") -> None:
    """Side-by-side bar rows, one row per histogram."""
    n_rows = len(histograms)
    n_bins = len(histograms[0])
    canvas = SvgCanvas(width=480, height=120 * n_rows, xlim=(0, 1), ylim=(0, 1))
    for r, (hist, label) in enumerate(zip(histograms, labels)):
        base = 1.0 - (r + 1) / n_rows
        h_scale = 0.8 / n_rows
        for b, v in enumerate(hist):
            x0 = b / n_bins
            x1 = (b + 0.85) / n_bins
            canvas.rect(x0, x1, base, base + max(float(v), 0.0) * h_scale,
                        fill=color(r))
        canvas.text(0.01, base + h_scale + 0.22 / n_rows, label, size=11)
    if title:
        canvas.text(0.01, 0.02, title, size=11)
    canvas.save(path)
