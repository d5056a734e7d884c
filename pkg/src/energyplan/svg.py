"""Plain-text SVG overlays of environments and trajectories.

One meter maps to ``SCALE`` pixels and the y axis points up, so world
coordinates are flipped when written. Numbers are printed with three
decimals, which keeps the files small and byte-stable.
"""

from __future__ import annotations

import numpy as np

from .geometry import PolygonEnvironment

SCALE = 50.0
MARGIN = 0.5

# fixed palette
OBSTACLE_FILL = "#b0b0b0"
OBSTACLE_STROKE = "#404040"
VERTEX_FILL = "#404040"
TRAJECTORY_STROKE = "#000000"
JUNCTION_FILL = "#1f77b4"
START_FILL = "#d62728"
GOAL_FILL = "#d62728"
BASELINE_STROKES = ("#d62728", "#1f77b4", "#2ca02c")


def _num(x: float) -> str:
    s = f"{x:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Frame:
    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, float) - MARGIN
        self.hi = np.asarray(hi, float) + MARGIN
        self.width = (self.hi[0] - self.lo[0]) * SCALE
        self.height = (self.hi[1] - self.lo[1]) * SCALE

    def xy(self, p) -> tuple:
        return ((p[0] - self.lo[0]) * SCALE, (self.hi[1] - p[1]) * SCALE)

    def points(self, pts) -> str:
        return " ".join(f"{_num(x)},{_num(y)}" for x, y in (self.xy(p) for p in pts))


def _star(cx: float, cy: float, r: float) -> list:
    pts = []
    for j in range(10):
        ang = np.pi / 2 + j * np.pi / 5
        rr = r if j % 2 == 0 else 0.4 * r
        pts.append((cx + rr * np.cos(ang), cy - rr * np.sin(ang)))
    return pts


def render(env: PolygonEnvironment, paths=(), start=None, goal=None, junctions=None,
           title: str | None = None) -> str:
    """SVG document with obstacles, vertices, polylines, start circle and goal star.

    ``paths`` holds ``(points, stroke)`` pairs, drawn in order.
    """
    clouds = [env.vertices] + [np.asarray(p, float).reshape(-1, 2) for p, _ in paths]
    clouds += [np.asarray(q, float).reshape(-1, 2) for q in (start, goal) if q is not None]
    allpts = np.vstack([c for c in clouds if len(c)] or [np.zeros((1, 2))])
    frame = _Frame(allpts.min(axis=0), allpts.max(axis=0))

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_num(frame.width)}" '
        f'height="{_num(frame.height)}" viewBox="0 0 {_num(frame.width)} {_num(frame.height)}">',
    ]
    if title:
        out.append(f"<title>{title}</title>")
    out.append('<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>')
    for l in range(len(env.polygons)):
        out.append(f'<polygon points="{frame.points(env.ring_points(l))}" '
                   f'fill="{OBSTACLE_FILL}" stroke="{OBSTACLE_STROKE}" stroke-width="1"/>')
    for v in env.vertices:
        x, y = frame.xy(v)
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="2" fill="{VERTEX_FILL}"/>')
    for pts, stroke in paths:
        pts = np.asarray(pts, float).reshape(-1, 2)
        if len(pts):
            out.append(f'<polyline points="{frame.points(pts)}" fill="none" '
                       f'stroke="{stroke}" stroke-width="2"/>')
    for q in (junctions if junctions is not None else []):
        x, y = frame.xy(q)
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="4" fill="{JUNCTION_FILL}"/>')
    if start is not None:
        x, y = frame.xy(start)
        out.append(f'<circle cx="{_num(x)}" cy="{_num(y)}" r="6" fill="{START_FILL}"/>')
    if goal is not None:
        x, y = frame.xy(goal)
        star = " ".join(f"{_num(a)},{_num(b)}" for a, b in _star(x, y, 8.0))
        out.append(f'<polygon points="{star}" fill="{GOAL_FILL}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
