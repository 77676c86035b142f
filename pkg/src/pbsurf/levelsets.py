"""Super-level regions, level curves and level-set intersection counts.

Level curves of a PL field are extracted by marching triangles.  Each
segment lives inside one triangle and is stored in that triangle's
barycentric chart ``(w1, w2)``, so two curves can only cross inside a shared
triangle and the crossing test is a plain 2D orientation test there.

For PL maps the coarea identity is exact triangle by triangle: the integral
of |{f, g}| over a triangle equals the area of its image under (f, g), and
K(s, t) counts the triangles whose image contains (s, t).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .cover import TriRegion, is_topological_disc, region_components
from .surface import ScalarField, poisson_bracket

__all__ = [
    "LevelCollisionError",
    "DegenerateIncidenceError",
    "Segments",
    "LevelCurve",
    "CoareaReport",
    "superlevel_region",
    "regularize_level",
    "level_segments",
    "level_curve",
    "count_level_intersections",
    "coarea_sides",
    "minimal_disc_hull",
]

NEAR_CRITICAL = 1e-6
MAX_HULL_COMPONENTS = 20


class LevelCollisionError(ValueError):
    """A queried level equals a vertex value."""


class DegenerateIncidenceError(ValueError):
    """A crossing test hit a zero orientation (non-generic position)."""


@dataclass
class Segments:
    """In-triangle line segments; endpoints in barycentric charts."""

    tri: np.ndarray  # (S,) triangle ids
    p0: np.ndarray  # (S, 2)
    p1: np.ndarray  # (S, 2)
    tag: np.ndarray  # (S,) integer tags (level index for level sets)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, np.int64))

    def __len__(self):
        return len(self.tri)

    def retag(self, tag):
        return Segments(self.tri, self.p0, self.p1, np.full(len(self.tri), tag, dtype=np.int64))

    def as_tuple(self):
        return (self.tri, self.p0, self.p1, self.tag)

    @staticmethod
    def concat(parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return Segments.empty()
        return Segments(
            np.concatenate([p.tri for p in parts]),
            np.concatenate([p.p0 for p in parts]),
            np.concatenate([p.p1 for p in parts]),
            np.concatenate([p.tag for p in parts]),
        )

    def points3d(self, mesh):
        """(S, 2, 3) endpoint coordinates (unwrapped on the torus)."""
        c = mesh.corners[self.tri]

        def lift(p):
            w1, w2 = p[:, 0:1], p[:, 1:2]
            return (1 - w1 - w2) * c[:, 0] + w1 * c[:, 1] + w2 * c[:, 2]

        return np.stack([lift(self.p0), lift(self.p1)], axis=1)

    def total_length(self, mesh):
        p = self.points3d(mesh)
        return float(np.linalg.norm(p[:, 1] - p[:, 0], axis=1).sum())


def _chart(k, mu):
    """Chart point on local edge k (corner k -> k+1) at parameter mu."""
    out = np.zeros((len(mu), 2))
    e0, e1, e2 = k == 0, k == 1, k == 2
    out[e0, 0] = mu[e0]
    out[e1, 0] = 1.0 - mu[e1]
    out[e1, 1] = mu[e1]
    out[e2, 1] = 1.0 - mu[e2]
    return out


def level_segments(tri_vals, levels, with_edges=False):
    """Marching-triangles segments of a PL field at several sorted levels.

    ``tri_vals`` is (F, 3).  Returns ``(segments, collisions)`` where
    ``segments.tag`` is the level index and ``collisions`` is the (C, 2)
    array of (triangle, level index) pairs skipped because a vertex value
    equals the level.  With ``with_edges`` the local edge indices and their
    parameters are returned as well.
    """
    tri_vals = np.asarray(tri_vals, dtype=float)
    levels = np.asarray(levels, dtype=float)
    F = len(tri_vals)
    lo, hi = tri_vals.min(axis=1), tri_vals.max(axis=1)
    i0 = np.searchsorted(levels, lo, side="left")
    i1 = np.searchsorted(levels, hi, side="right")
    cnt = np.maximum(i1 - i0, 0)
    tri = np.repeat(np.arange(F), cnt)
    start = np.cumsum(cnt) - cnt
    lev = i0[tri] + (np.arange(len(tri)) - start[tri])
    s = levels[lev]
    v = tri_vals[tri]
    hit = (v == s[:, None]).any(axis=1)
    collisions = np.stack([tri[hit], lev[hit]], axis=1)
    tri, lev, s, v = tri[~hit], lev[~hit], s[~hit], v[~hit]
    above = v > s[:, None]
    vn = np.roll(v, -1, axis=1)
    crosses = above != np.roll(above, -1, axis=1)  # (S, 3): local edge k crossed
    keep = crosses.any(axis=1)
    tri, lev, s, v, vn, crosses = tri[keep], lev[keep], s[keep], v[keep], vn[keep], crosses[keep]
    ka = np.argmax(crosses, axis=1)
    kb = 2 - np.argmax(crosses[:, ::-1], axis=1)
    rows = np.arange(len(tri))
    mua = (s - v[rows, ka]) / (vn[rows, ka] - v[rows, ka])
    mub = (s - v[rows, kb]) / (vn[rows, kb] - v[rows, kb])
    seg = Segments(tri.astype(np.int64), _chart(ka, mua), _chart(kb, mub), lev.astype(np.int64))
    if with_edges:
        return seg, collisions, (ka, mua, kb, mub)
    return seg, collisions


def superlevel_region(f: ScalarField, t: float) -> TriRegion:
    """Triangles on which all three vertex values of ``f`` exceed ``t``."""
    return TriRegion(f.mesh, (f.tri_values() > t).all(axis=1))


def _vertex_hash(v):
    return ((np.asarray(v, dtype=np.uint64) * np.uint64(2654435761)) % np.uint64(1 << 32)) / float(1 << 32)


def regularize_level(values, s, max_tries=16):
    """Nudge ``s`` upward until it equals no vertex value.

    Each collision with vertex ``v`` moves the level by
    ``eps * (1 + hash(v))``, ``eps = 1e-9 * (max - min)``.
    """
    values = np.asarray(values, dtype=float)
    rng = float(values.max() - values.min()) or 1.0
    eps = 1e-9 * rng
    s = float(s)
    for _ in range(max_tries):
        hits = np.flatnonzero(values == s)
        if len(hits) == 0:
            return s
        s = s + eps * (1.0 + float(_vertex_hash(hits[0])))
    raise LevelCollisionError(f"could not regularize level {s!r}")


@dataclass
class LevelCurve:
    """Closed polylines of ``{field = level}``.

    Each polyline is a pair ``(edges, lam)``: the crossed mesh edges in
    order and the crossing parameter along each edge (from its lower to its
    higher vertex index).
    """

    field: ScalarField
    level: float
    polylines: list
    segments: Segments

    def __len__(self):
        return len(self.polylines)

    def length(self):
        return self.segments.total_length(self.field.mesh)


def level_curve(f: ScalarField, s: float) -> LevelCurve:
    mesh = f.mesh
    if np.any(f.values == s):
        raise LevelCollisionError(f"level {s!r} equals a vertex value; use regularize_level")
    seg, _, (ka, _, kb, _) = level_segments(f.tri_values(), [s], with_edges=True)
    if len(seg) == 0:
        return LevelCurve(f, float(s), [], seg)
    ea = mesh.tri_edges[seg.tri, ka]
    eb = mesh.tri_edges[seg.tri, kb]
    # each crossed edge belongs to exactly two segments
    by_edge = {}
    for i, (a, b) in enumerate(zip(ea.tolist(), eb.tolist())):
        by_edge.setdefault(a, []).append(i)
        by_edge.setdefault(b, []).append(i)
    ends = {i: (a, b) for i, (a, b) in enumerate(zip(ea.tolist(), eb.tolist()))}
    seen = np.zeros(len(seg), dtype=bool)
    vals = f.values
    polylines = []
    for start in range(len(seg)):
        if seen[start]:
            continue
        chain = []
        cur, enter = start, ends[start][0]
        while True:
            seen[cur] = True
            a, b = ends[cur]
            nxt_edge = b if a == enter else a
            chain.append(nxt_edge)
            x, y = by_edge[nxt_edge]
            nxt = y if x == cur else x
            if nxt == start:
                break
            cur, enter = nxt, nxt_edge
        edges = np.array(chain, dtype=np.int64)
        lo, hi = mesh.edges[edges, 0], mesh.edges[edges, 1]
        lam = (s - vals[lo]) / (vals[hi] - vals[lo])
        polylines.append((edges, lam))
    return LevelCurve(f, float(s), polylines, seg)


def _check_pair(f, g):
    if f.mesh is not g.mesh:
        from .surface import MeshMismatchError

        raise MeshMismatchError("fields live on different meshes")


def count_level_intersections(f: ScalarField, g: ScalarField, s: float, t: float) -> int:
    """#(f^-1(s) n g^-1(t)) by exact in-triangle segment tests."""
    _check_pair(f, g)
    for h, lev in ((f, s), (g, t)):
        if np.any(h.values == lev):
            raise LevelCollisionError(f"level {lev!r} equals a vertex value")
    sa, _ = level_segments(f.tri_values(), [s])
    sb, _ = level_segments(g.tri_values(), [t])
    counts, degen = kernels.count_crossings(sa.as_tuple(), sb.as_tuple())
    if degen.any():
        raise DegenerateIncidenceError(f"{int(degen.sum())} degenerate incidences at ({s}, {t})")
    return int(counts[0, 0])


# ----------------------------------------------------------------------
# coarea


@dataclass
class CoareaReport:
    lhs: float
    rhs: float
    omega: tuple
    grid: tuple
    skipped_cells: int
    skipped_measure: float
    omega_measure: float
    degenerate_tests: int
    k_histogram: dict = field(default_factory=dict)

    @property
    def rel_diff(self):
        return abs(self.lhs - self.rhs) / max(self.lhs, 1e-12)

    @property
    def skipped_fraction(self):
        return self.skipped_measure / self.omega_measure

    def as_dict(self):
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "rel_diff": self.rel_diff,
            "omega": list(self.omega),
            "grid": list(self.grid),
            "skipped_cells": self.skipped_cells,
            "skipped_measure": self.skipped_measure,
            "skipped_fraction": self.skipped_fraction,
            "omega_measure": self.omega_measure,
            "degenerate_tests": self.degenerate_tests,
            "k_histogram": {str(k): v for k, v in sorted(self.k_histogram.items())},
        }


def _star_ranges(mesh, tri_vals):
    tmin, tmax = tri_vals.min(axis=1), tri_vals.max(axis=1)
    vmin = np.full(mesh.n_vertices, np.inf)
    vmax = np.full(mesh.n_vertices, -np.inf)
    flat = mesh.triangles.ravel()
    np.minimum.at(vmin, flat, np.repeat(tmin, 3))
    np.maximum.at(vmax, flat, np.repeat(tmax, 3))
    return vmin, vmax


def _near_critical_cells(mesh, fvals, gtri, s_levels, t_levels, skip, transpose=False):
    """Mark cells (k, l) where level s_k is within NEAR_CRITICAL of f at a
    vertex whose star meets the level t_l of g."""
    gmin, gmax = _star_ranges(mesh, gtri)
    order = np.argsort(fvals)
    fs = fvals[order]
    lo = np.searchsorted(fs, s_levels - NEAR_CRITICAL, side="left")
    hi = np.searchsorted(fs, s_levels + NEAR_CRITICAL, side="right")
    for k in np.flatnonzero(hi > lo):
        for v in order[lo[k] : hi[k]]:
            a = np.searchsorted(t_levels, gmin[v], side="left")
            b = np.searchsorted(t_levels, gmax[v], side="right")
            if transpose:
                skip[a:b, k] = True
            else:
                skip[k, a:b] = True


def level_grid_counts(f: ScalarField, g: ScalarField, s_levels, t_levels):
    """K(s_k, t_l) on a grid of sorted levels, with a degeneracy mask."""
    ftri, gtri = f.tri_values(), g.tri_values()
    sa, col_a = level_segments(ftri, s_levels)
    sb, col_b = level_segments(gtri, t_levels)
    counts, degen = kernels.count_crossings(sa.as_tuple(), sb.as_tuple(), len(s_levels), len(t_levels))
    skip = degen > 0
    mesh = f.mesh
    _near_critical_cells(mesh, f.values, gtri, np.asarray(s_levels), np.asarray(t_levels), skip)
    _near_critical_cells(mesh, g.values, ftri, np.asarray(t_levels), np.asarray(s_levels), skip, transpose=True)
    return counts, skip, int(degen.sum())


def coarea_sides(f: ScalarField, g: ScalarField, omega, grid) -> CoareaReport:
    """Both sides of the coarea identity over the rectangle ``omega``.

    ``omega = (s0, s1, t0, t1)``.  The left side integrates |{f, g}| over
    triangles whose barycentre value of (f, g) lies in omega; the right side
    is the midpoint rule for K on an ``ns x nt`` grid, skipping near-critical
    cells.
    """
    _check_pair(f, g)
    s0, s1, t0, t1 = (float(x) for x in omega)
    ns, nt = (int(x) for x in grid)
    if ns < 10 or nt < 10:
        raise ValueError("coarea grid must be at least 10 x 10")
    mesh = f.mesh
    fb = f.tri_values().mean(axis=1)
    gb = g.tri_values().mean(axis=1)
    inside = (fb > s0) & (fb < s1) & (gb > t0) & (gb < t1)
    dens = np.abs(poisson_bracket(f, g))
    lhs = float(np.dot(dens[inside], mesh.tri_area_omega[inside]))

    ds, dt = (s1 - s0) / ns, (t1 - t0) / nt
    sm = s0 + ds * (np.arange(ns) + 0.5)
    tm = t0 + dt * (np.arange(nt) + 0.5)
    counts, skip, ndeg = level_grid_counts(f, g, sm, tm)
    rhs = float(counts[~skip].sum() * ds * dt)
    vals, freq = np.unique(counts[~skip], return_counts=True)
    return CoareaReport(
        lhs=lhs,
        rhs=rhs,
        omega=(s0, s1, t0, t1),
        grid=(ns, nt),
        skipped_cells=int(skip.sum()),
        skipped_measure=float(skip.sum() * ds * dt),
        omega_measure=(s1 - s0) * (t1 - t0),
        degenerate_tests=ndeg,
        k_histogram={int(k): int(c) for k, c in zip(vals, freq)},
    )


# ----------------------------------------------------------------------


class NoDiscHullError(ValueError):
    pass


def minimal_disc_hull(comp: TriRegion, container: TriRegion) -> TriRegion:
    """Smallest-area disc of the form comp + (some complementary components)
    that stays inside ``container``."""
    if not comp:
        raise ValueError("component is empty")
    if len(region_components(comp)) != 1:
        raise ValueError("component must be connected")
    if not comp.issubset(container):
        raise ValueError("component must lie inside the container")
    holes = region_components(comp.complement())
    if len(holes) > MAX_HULL_COMPONENTS:
        raise NoDiscHullError(f"{len(holes)} complementary components exceed the guard of {MAX_HULL_COMPONENTS}")
    best, best_area = None, np.inf
    for bits in range(1 << len(holes)):
        mask = comp.mask.copy()
        for k, h in enumerate(holes):
            if bits >> k & 1:
                mask |= h.mask
        cand = TriRegion(comp.mesh, mask)
        if not cand.issubset(container):
            continue
        area = cand.area
        if area < best_area and is_topological_disc(cand):
            best, best_area = cand, area
    if best is None:
        raise NoDiscHullError("no disc hull inside the container")
    return best
