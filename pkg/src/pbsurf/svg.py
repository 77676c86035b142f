"""Static SVG views of regions and curves.

The sphere is drawn in the Lambert cylindrical equal-area chart
(longitude, height), the torus in its flat chart.  Output depends only on
the inputs: elements are written in input order with fixed number
formatting.
"""
from __future__ import annotations

import math

import numpy as np

from .levelsets import LevelCurve, Segments
from .permcurves import PermCurveSet

WIDTH = 720
PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948", "#b07aa1", "#9c755f"]
CURVE_PALETTE = ["#1b1b1b", "#c0392b", "#2c3e8f", "#1e8449"]


def _chart(mesh):
    """(project, (x0, y0, w, h), periods) for the mesh's topology."""
    if mesh is None:
        return (lambda p: p[..., :2]), (0.0, 0.0, 1.0, 1.0), (None, None)
    if mesh.topology == "sphere":
        r = float(np.linalg.norm(mesh.vertices, axis=1).mean())

        def project(p):
            lon = np.arctan2(p[..., 1], p[..., 0])
            z = np.clip(p[..., 2] / r, -1.0, 1.0)
            return np.stack([lon, z], axis=-1)

        return project, (-math.pi, -1.0, 2 * math.pi, 2.0), (2 * math.pi, None)
    Lx, Ly = mesh.period

    def project(p):
        return p[..., :2]

    return project, (0.0, 0.0, float(Lx), float(Ly)), (float(Lx), float(Ly))


def _unwrap_lon(q, period):
    """Make a polygon's x coordinates continuous across the chart seam."""
    q = q.copy()
    x = q[..., 0]
    ref = x[..., :1]
    x -= period * np.round((x - ref) / period)
    return q


def _fmt(v):
    s = f"{v:.3f}"
    return "0.000" if s == "-0.000" else s


class _Canvas:
    def __init__(self, box):
        self.x0, self.y0, self.w, self.h = box
        self.scale = WIDTH / self.w
        self.H = int(round(self.h * self.scale))
        self.parts = []

    def xy(self, q):
        # flip y so north / increasing y points up
        return (q[..., 0] - self.x0) * self.scale, (self.y0 + self.h - q[..., 1]) * self.scale

    def path(self, polys, closed, attrs):
        d = []
        for poly in polys:
            X, Y = self.xy(poly)
            cmds = [f"M{_fmt(X[0])} {_fmt(Y[0])}"] + [f"L{_fmt(x)} {_fmt(y)}" for x, y in zip(X[1:], Y[1:])]
            d.append(" ".join(cmds) + (" Z" if closed else ""))
        if d:
            self.parts.append(f'<path d="{" ".join(d)}" {attrs}/>')

    def render(self):
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{self.H}" '
            f'viewBox="0 0 {WIDTH} {self.H}">',
            f'<defs><clipPath id="chart"><rect x="0" y="0" width="{WIDTH}" height="{self.H}"/></clipPath></defs>',
            f'<rect x="0" y="0" width="{WIDTH}" height="{self.H}" fill="white" stroke="black" stroke-width="1"/>',
            f'<line x1="0" y1="{_fmt(self.H / 2)}" x2="{WIDTH}" y2="{_fmt(self.H / 2)}" stroke="#999" stroke-width="0.5"/>',
            f'<line x1="{_fmt(WIDTH / 2)}" y1="0" x2="{_fmt(WIDTH / 2)}" y2="{self.H}" stroke="#999" stroke-width="0.5"/>',
            '<g clip-path="url(#chart)">',
        ]
        return "\n".join(head + self.parts + ["</g>", "</svg>", ""])


def _shifts(q, box, periods):
    """Copies of polygons shifted by one period wherever they overhang."""
    x0, y0, w, h = box
    px, py = periods
    out = [q]
    lo, hi = q[..., 0].min(axis=-1), q[..., 0].max(axis=-1)
    if px:
        out += [q[lo < x0] + np.array([px, 0.0]), q[hi > x0 + w] - np.array([px, 0.0])]
    if py:
        lo, hi = q[..., 1].min(axis=-1), q[..., 1].max(axis=-1)
        more = []
        for part in out:
            more.append(part[part[..., 1].min(axis=-1) < y0] + np.array([0.0, py]))
            more.append(part[part[..., 1].max(axis=-1) > y0 + h] - np.array([0.0, py]))
        out += more
    return [p for p in out if len(p)]


def _segments_of(c):
    if isinstance(c, LevelCurve):
        return c.segments
    if isinstance(c, PermCurveSet):
        return c.pieces
    if isinstance(c, Segments):
        return c
    raise TypeError(f"cannot draw {type(c).__name__}")


def _unwrap_steps(q, periods):
    """Unwrap consecutive points of one polyline; True if it closes up."""
    q = q.copy()
    closed = True
    for ax, per in enumerate(periods):
        if not per:
            continue
        x = q[:, ax]
        d = np.diff(x)
        d -= per * np.round(d / per)
        x[1:] = x[0] + np.cumsum(d)
        back = x[0] - x[-1]
        if np.round(back / per) != 0:  # winds around this period
            closed = False
    return q, closed


def _polyline_points(curve):
    """Crossing points of each closed polyline of a LevelCurve (3D)."""
    mesh = curve.field.mesh
    V = mesh.vertices
    out = []
    for edges, lam in curve.polylines:
        lo, hi = mesh.edges[edges, 0], mesh.edges[edges, 1]
        d = V[hi] - V[lo]
        if mesh.topology == "torus":
            per = np.array(mesh.period, dtype=float)
            d[:, :2] -= per * np.round(d[:, :2] / per)
        out.append(V[lo] + lam[:, None] * d)
    return out


def _infer_mesh(curves, regions):
    for r in regions:
        return r.mesh
    for c in curves:
        if isinstance(c, LevelCurve):
            return c.field.mesh
    if curves:
        raise ValueError("pass mesh= to draw bare segment families")
    return None


def render_svg(curves=(), regions=(), mesh=None) -> str:
    curves, regions = list(curves), list(regions)
    if mesh is None:
        mesh = _infer_mesh(curves, regions)
    project, box, periods = _chart(mesh)
    cv = _Canvas(box)
    for k, r in enumerate(regions):
        idx = np.flatnonzero(r.mask)
        if len(idx) == 0:
            continue
        q = project(mesh.corners[idx])  # (T, 3, 2)
        if mesh.topology == "sphere":
            q = _unwrap_lon(q, periods[0])
        polys = [p for part in _shifts(q, box, periods) for p in part]
        color = PALETTE[k % len(PALETTE)]
        cv.path(polys, True, f'fill="{color}" fill-opacity="0.35" stroke="none"')
    for k, c in enumerate(curves):
        attrs = f'fill="none" stroke="{CURVE_PALETTE[k % len(CURVE_PALETTE)]}" stroke-width="1.5"'
        if isinstance(c, LevelCurve) and c.field.mesh is mesh:
            # one subpath per closed polyline, closed when it does not wind
            # around a chart period
            for pts in _polyline_points(c):
                q, closed = _unwrap_steps(project(pts), periods)
                polys = [p[0] for p in _shifts(q[None], box, periods)]
                cv.path(polys, closed, attrs)
            continue
        seg = _segments_of(c)
        if len(seg) == 0:
            continue
        q = project(seg.points3d(mesh))  # (S, 2, 2)
        if mesh.topology == "sphere":
            q = _unwrap_lon(q, periods[0])
        polys = [p for part in _shifts(q, box, periods) for p in part]
        cv.path(polys, False, attrs)
    return cv.render()


def emit_svg(curves=(), regions=(), path=None, mesh=None) -> str:
    """Write regions (shaded) and curves (stroked) to ``path``; returns the text."""
    text = render_svg(curves, regions, mesh)
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return text
