"""Partitions of unity subordinate to a cover.

A partition is stored as an (N, V) array of vertex values.  Field ``i`` may be
positive only at vertices whose whole star lies in its support region, so the
piecewise-linear function vanishes off that region and subordination is
strict.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .cover import Cover, CoverError, TriRegion
from .surface import Mesh, ScalarField

__all__ = [
    "PartitionOfUnity",
    "PartitionReport",
    "ShrunkenCoverError",
    "support_region",
    "support_vertices",
    "build_bump_partition",
    "complementary_pair_partition",
    "validate_partition",
    "project_to_feasible",
    "save_partition_csv",
]


class ShrunkenCoverError(CoverError):
    """The shrunken supports no longer cover the mesh."""

    def __init__(self, msg, uncovered_triangles):
        super().__init__(msg)
        self.uncovered_triangles = np.asarray(uncovered_triangles)


@dataclass(eq=False)
class PartitionOfUnity:
    mesh: Mesh
    values: np.ndarray  # (N, V)
    supports: list  # TriRegion per field
    cover: Cover = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != self.mesh.n_vertices:
            raise ValueError("partition values must be (N, V)")
        if len(self.supports) != len(v):
            raise ValueError("one support region per field")
        v.setflags(write=False)
        self.values = v

    @property
    def N(self):
        return len(self.values)

    @property
    def fields(self):
        return [ScalarField(self.mesh, row) for row in self.values]

    def support_masks(self):
        return np.stack([support_vertices(s) for s in self.supports])


@dataclass
class PartitionReport:
    negativity: float  # max(-f_i(v), 0)
    sum_error: float  # max |sum_i f_i(v) - 1|
    support_violation: float  # max |f_i(v)| at vertices outside the support stars
    supports_inside_cover: bool

    def ok(self, tol=1e-9):
        return (
            self.negativity <= tol
            and self.sum_error <= tol
            and self.support_violation <= tol
            and self.supports_inside_cover
        )

    def as_dict(self):
        return {
            "negativity": self.negativity,
            "sum_error": self.sum_error,
            "support_violation": self.support_violation,
            "supports_inside_cover": self.supports_inside_cover,
        }


def support_region(u: TriRegion, margin: int) -> TriRegion:
    """Peel ``margin`` rings of triangles off ``u``.

    Each round removes the triangles of ``u`` sharing an edge with the
    current complement.  ``margin=0`` returns ``u``.
    """
    if margin < 0:
        raise ValueError("margin must be nonnegative")
    mask = u.mask.copy()
    adj = u.mesh.triangle_adjacency
    for _ in range(int(margin)):
        if mask.all() or not mask.any():
            break
        touches = adj @ (~mask).astype(np.int32) > 0
        mask &= ~touches
    return TriRegion(u.mesh, mask)


def support_vertices(r: TriRegion) -> np.ndarray:
    """Vertices whose entire star lies in ``r`` (boolean mask over vertices)."""
    inside = r.mesh.vertex_triangles @ r.mask.astype(np.int32)
    return np.asarray(inside).ravel() == r.mesh.vertex_degree


def _shrunk_supports(c: Cover, margin):
    supports = [support_region(r, margin) for r in c.regions]
    masks = np.stack([support_vertices(s) for s in supports])
    bare = ~masks.any(axis=0)
    if bare.any():
        tris = np.flatnonzero(bare[c.mesh.triangles].any(axis=1))
        raise ShrunkenCoverError(
            f"supports shrunk by margin {margin} leave {int(bare.sum())} vertices "
            f"({len(tris)} triangles) uncovered",
            tris,
        )
    return supports, masks


def build_bump_partition(c: Cover, margin: int = 2, sharpness: float = 2.0) -> PartitionOfUnity:
    """Normalized bumps: the support indicator smoothed by ``margin`` rounds
    of neighbour averaging, zeroed off the support, raised to ``sharpness``."""
    if not sharpness > 0:
        raise ValueError("sharpness must be positive")
    mesh = c.mesh
    supports, masks = _shrunk_supports(c, margin)
    A = mesh.vertex_adjacency.astype(float)
    deg = np.asarray(A.sum(axis=1)).ravel() + 1.0
    b = masks.astype(float)
    for _ in range(int(margin)):
        b = (b + (A @ b.T).T) / deg
    b = np.where(masks, b, 0.0) ** sharpness
    return PartitionOfUnity(mesh, b / b.sum(axis=0), supports, c)


DYADIC_BITS = 20


def complementary_pair_partition(c: Cover, margin: int = 2, sharpness: float = 2.0) -> PartitionOfUnity:
    """Two-set partition (f, 1 - f) with every bracket exactly zero.

    f is the bump partition's first field rounded to a multiple of
    2^-20, so 1 - f and all vertex differences are exact in floating point
    and the PL gradients of f and 1 - f are exact negatives.
    """
    if len(c) != 2:
        raise ValueError("complementary pair needs a two-set cover")
    p = build_bump_partition(c, margin, sharpness)
    scale = float(1 << DYADIC_BITS)
    f = np.round(p.values[0] * scale) / scale
    return PartitionOfUnity(p.mesh, np.stack([f, 1.0 - f]), p.supports, c)


def validate_partition(p: PartitionOfUnity) -> PartitionReport:
    f = p.values
    masks = p.support_masks()
    inside = True
    if p.cover is not None:
        inside = all(s.issubset(u) for s, u in zip(p.supports, p.cover.regions))
    outside = np.where(masks, 0.0, np.abs(f))
    return PartitionReport(
        negativity=float(max(0.0, -f.min())) if f.size else 0.0,
        sum_error=float(np.abs(f.sum(axis=0) - 1.0).max()),
        support_violation=float(outside.max()) if f.size else 0.0,
        supports_inside_cover=bool(inside),
    )


def project_to_feasible(raw, supports, cover=None) -> PartitionOfUnity:
    """Vertexwise map onto the feasible set.

    Entries off the support stars are zeroed, negatives clamped, columns
    renormalized.  A vertex with all entries zero is split uniformly between
    the fields allowed there, the lowest index taking the rounding remainder.
    """
    supports = list(supports)
    mesh = supports[0].mesh
    x = np.array([getattr(r, "values", r) for r in raw], dtype=float)
    masks = np.stack([support_vertices(s) for s in supports])
    k = masks.sum(axis=0)
    if np.any(k == 0):
        bad = np.flatnonzero(k == 0)
        raise ShrunkenCoverError(f"{len(bad)} vertices lie in no support", bad)
    x = np.where(masks, np.maximum(x, 0.0), 0.0)
    s = x.sum(axis=0)
    dead = s == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        x = np.where(dead, 0.0, x / np.where(dead, 1.0, s))
    if dead.any():
        cols = np.flatnonzero(dead)
        share = 1.0 / k[cols]
        x[:, cols] = masks[:, cols] * share
        first = np.argmax(masks[:, cols], axis=0)
        x[first, cols] = 1.0 - (k[cols] - 1) * share
    return PartitionOfUnity(mesh, x, supports, cover)


def save_partition_csv(p: PartitionOfUnity, path) -> None:
    """One row per vertex: index, f_1, ..., f_N."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex"] + [f"f_{i + 1}" for i in range(p.N)])
        for v in range(p.mesh.n_vertices):
            w.writerow([v] + [repr(float(x)) for x in p.values[:, v]])
