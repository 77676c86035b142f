import math

import numpy as np
import pytest

from pbsurf.cover import TriRegion, is_topological_disc, region_components, region_from_predicate
from pbsurf.levelsets import (
    LevelCollisionError,
    NoDiscHullError,
    coarea_sides,
    count_level_intersections,
    level_curve,
    level_grid_counts,
    level_segments,
    minimal_disc_hull,
    regularize_level,
    superlevel_region,
)
from pbsurf.surface import MeshMismatchError, build_sphere_mesh, build_torus_mesh, integrate, poisson_bracket

# analytic value of int |x2| over {|x3| < 0.9, |x1| < 0.9} on the unit sphere
SPHERE_OMEGA_EXACT = 2 * (math.pi - 4 * (math.acos(0.9) - 0.9 * math.sqrt(0.19)))


def coords(m):
    return [m.field(m.vertices[:, k]) for k in range(3)]


def test_hemisphere_superlevel_area(sphere5):
    x3 = coords(sphere5)[2]
    assert not np.any(x3.values == 0.0)
    r = superlevel_region(x3, 0.0)
    assert r.area == pytest.approx(2 * math.pi, rel=0.03)
    assert is_topological_disc(r)


def test_latitude_circle(sphere5):
    x3 = coords(sphere5)[2]
    s = regularize_level(x3.values, 0.3)
    c = level_curve(x3, s)
    assert len(c) == 1
    assert c.length() == pytest.approx(2 * math.pi * math.sqrt(1 - s * s), rel=5e-3)
    edges, lam = c.polylines[0]
    assert len(edges) == len(c.segments)
    assert ((lam > 0) & (lam < 1)).all()
    # crossing points really sit on the level
    m = sphere5
    lo, hi = m.edges[edges, 0], m.edges[edges, 1]
    z = (1 - lam) * m.vertices[lo, 2] + lam * m.vertices[hi, 2]
    assert np.allclose(z, s, atol=1e-12)


def test_two_bumps_give_two_components():
    m = build_torus_mesh(40, 40)
    x, y = m.vertices[:, 0], m.vertices[:, 1]
    bump = lambda cx, cy: np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / 0.01)
    f = m.field(bump(0.25, 0.25) + bump(0.75, 0.75))
    c = level_curve(f, regularize_level(f.values, 0.5))
    assert len(c) == 2


def test_empty_level_and_collision(sphere3):
    x3 = coords(sphere3)[2]
    assert len(level_curve(x3, 2.0)) == 0
    with pytest.raises(LevelCollisionError):
        level_curve(x3, float(x3.values[0]))
    with pytest.raises(LevelCollisionError):
        regularize_level(np.zeros(5), 0.0, max_tries=0)


def test_regularize_level_moves_off_vertices():
    vals = np.array([0.0, 0.5, 1.0])
    s = regularize_level(vals, 0.5)
    assert s > 0.5 and s - 0.5 < 3e-9 and s not in vals
    assert regularize_level(vals, 0.25) == 0.25


def test_two_great_circles_meet_twice(sphere5):
    x1, _, x3 = coords(sphere5)
    assert count_level_intersections(x3, x1, 1e-3, 1e-3) == 2
    assert count_level_intersections(x1, x3, 1e-3, 1e-3) == 2


def test_intersection_counts_even_on_sphere(sphere3):
    x1, x2, x3 = coords(sphere3)
    levels = np.linspace(-0.98, 0.98, 50) + 1e-7
    counts, skip, _ = level_grid_counts(x3, x1, levels, levels)
    good = counts[~skip]
    assert set(np.unique(good).tolist()) <= {0, 2}
    assert (counts % 2 == 0).all()
    c2, _, _ = level_grid_counts(x2, x3, levels, levels)
    assert (c2 % 2 == 0).all()


def test_intersection_symmetry_and_constant(sphere3):
    rng = np.random.default_rng(0)
    m = sphere3
    f = m.field(rng.standard_normal(m.n_vertices))
    g = m.field(rng.standard_normal(m.n_vertices))
    for s, t in rng.uniform(-1, 1, (10, 2)):
        assert count_level_intersections(f, g, s, t) == count_level_intersections(g, f, t, s)
    const = m.field(np.full(m.n_vertices, 0.25))
    assert count_level_intersections(f, const, 0.1, 0.3) == 0
    with pytest.raises(MeshMismatchError):
        count_level_intersections(f, build_sphere_mesh(1).field(np.zeros(42)), 0.1, 0.1)


def test_superlevel_monotone(sphere3):
    rng = np.random.default_rng(1)
    f = sphere3.field(rng.random(sphere3.n_vertices))
    ts = np.sort(rng.random(6))
    regions = [superlevel_region(f, t) for t in ts]
    for a, b in zip(regions, regions[1:]):
        assert b.issubset(a)


def test_level_segments_consistent_with_regions(sphere3):
    rng = np.random.default_rng(2)
    f = sphere3.field(rng.random(sphere3.n_vertices))
    tv = f.tri_values()
    levels = np.array([0.2, 0.5, 0.7])
    seg, collisions = level_segments(tv, levels)
    assert len(collisions) == 0
    for k, s in enumerate(levels):
        tris = seg.tri[seg.tag == k]
        straddle = np.flatnonzero((tv.min(axis=1) < s) & (tv.max(axis=1) > s))
        assert np.array_equal(np.sort(tris), straddle)
        assert not superlevel_region(f, s).mask[tris].any()
    # endpoints lie on the triangle boundary in the chart
    for p in (seg.p0, seg.p1):
        on_edge = np.isclose(p[:, 1], 0) | np.isclose(p[:, 0], 0) | np.isclose(p.sum(axis=1), 1)
        assert on_edge.all()


def test_collision_reported(sphere3):
    x3 = coords(sphere3)[2]
    s = float(x3.values[5])
    seg, col = level_segments(x3.tri_values(), [s])
    assert len(col) > 0 and (col[:, 1] == 0).all()
    assert not np.isin(col[:, 0], seg.tri).any()


def test_coarea_on_sphere(sphere5):
    x1, _, x3 = coords(sphere5)
    rep = coarea_sides(x3, x1, (-0.9, 0.9, -0.9, 0.9), (100, 100))
    assert rep.lhs == pytest.approx(SPHERE_OMEGA_EXACT, rel=2e-3)
    assert rep.rel_diff <= 0.02
    assert rep.skipped_fraction < 0.01
    assert set(rep.k_histogram) <= {0, 2}
    with pytest.raises(ValueError):
        coarea_sides(x3, x1, (-0.9, 0.9, -0.9, 0.9), (5, 100))


def test_coarea_lhs_over_large_window_is_full_integral(sphere3):
    x1, _, x3 = coords(sphere3)
    rep = coarea_sides(x3, x1, (-2, 2, -2, 2), (10, 10))
    assert rep.lhs == pytest.approx(integrate(sphere3, np.abs(poisson_bracket(x3, x1))), rel=1e-14)


def test_coarea_converges_with_grid(sphere5):
    x1, _, x3 = coords(sphere5)
    errs = [coarea_sides(x3, x1, (-0.9, 0.9, -0.9, 0.9), (n, n)).rel_diff for n in (10, 30, 100)]
    assert errs[-1] < errs[0]
    assert errs[-1] < 0.01


def test_hull_of_disc_is_itself(sphere3):
    cap = region_from_predicate(sphere3, lambda p: p[:, 2] > 0.3)
    assert minimal_disc_hull(cap, TriRegion.full(sphere3)).same_as(cap)


def test_hull_of_annulus(sphere3):
    m = sphere3
    ann = region_from_predicate(m, lambda p: np.abs(p[:, 2] - 0.2) < 0.4)
    holes = region_components(ann.complement())
    assert len(holes) == 2
    north, south = sorted(holes, key=lambda h: -m.corners.mean(axis=1)[h.indices, 2].mean())
    h = minimal_disc_hull(ann, TriRegion.full(m))
    assert is_topological_disc(h) and ann.issubset(h)
    assert h.same_as(ann | north)  # the cap at z > 0.6 is the smaller hole
    assert h.area == pytest.approx(ann.area + north.area, rel=1e-12)
    # forbid the north cap: the south one must be used
    cont = north.complement() | ann
    h2 = minimal_disc_hull(ann, cont)
    assert h2.same_as(ann | south)
    with pytest.raises(NoDiscHullError):
        minimal_disc_hull(ann, ann)


def test_hull_with_three_holes(sphere3):
    m = sphere3
    axes = np.eye(3)
    holes = lambda p: np.stack([p @ a > 0.85 for a in axes]).any(axis=0)
    comp = region_from_predicate(m, lambda p: ~holes(p), mode="majority")
    h = minimal_disc_hull(comp, TriRegion.full(m))
    assert is_topological_disc(h)
    assert h.area < m.total_area
    missing = h.complement()
    assert missing and is_topological_disc(missing)


def test_hull_input_checks(sphere3):
    m = sphere3
    with pytest.raises(ValueError):
        minimal_disc_hull(TriRegion.empty(m), TriRegion.full(m))
    two = region_from_predicate(m, lambda p: np.abs(p[:, 2]) > 0.7)
    with pytest.raises(ValueError):
        minimal_disc_hull(two, TriRegion.full(m))
