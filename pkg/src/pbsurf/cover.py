"""Finite covers of a mesh by triangle regions.

A region stands for the open interior of a union of triangles.  Covers are
checked triangle-wise, which keeps the set-cover questions (kappa, essential
sets) exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .surface import Mesh, MeshMismatchError, ScalarField

__all__ = [
    "TriRegion",
    "Cover",
    "CoverError",
    "region_from_predicate",
    "is_cover",
    "kappa",
    "smallest_subcover",
    "essential_sets",
    "region_components",
    "is_topological_disc",
    "region_area",
]

MAX_KAPPA_SETS = 24


class CoverError(ValueError):
    pass


class TriRegion:
    """Set of triangles of ``mesh`` (read-only boolean mask)."""

    __slots__ = ("mesh", "mask")

    def __init__(self, mesh: Mesh, mask):
        m = np.asarray(mask)
        if m.dtype != bool:
            idx = np.asarray(m, dtype=np.int64)
            m = np.zeros(mesh.n_triangles, dtype=bool)
            m[idx] = True
        elif m.shape != (mesh.n_triangles,):
            raise ValueError("region mask needs one entry per triangle")
        m = m.copy()
        m.setflags(write=False)
        self.mesh = mesh
        self.mask = m

    @classmethod
    def empty(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_triangles, dtype=bool))

    @classmethod
    def full(cls, mesh):
        return cls(mesh, np.ones(mesh.n_triangles, dtype=bool))

    @property
    def indices(self):
        return np.flatnonzero(self.mask)

    @property
    def area(self):
        return float(self.mesh.tri_area_omega[self.mask].sum())

    def __len__(self):
        return int(self.mask.sum())

    def __bool__(self):
        return bool(self.mask.any())

    def _check(self, other):
        if other.mesh is not self.mesh:
            raise MeshMismatchError("regions live on different meshes")

    def __or__(self, other):
        self._check(other)
        return TriRegion(self.mesh, self.mask | other.mask)

    def __and__(self, other):
        self._check(other)
        return TriRegion(self.mesh, self.mask & other.mask)

    def __sub__(self, other):
        self._check(other)
        return TriRegion(self.mesh, self.mask & ~other.mask)

    def complement(self):
        return TriRegion(self.mesh, ~self.mask)

    def issubset(self, other):
        self._check(other)
        return not np.any(self.mask & ~other.mask)

    def same_as(self, other):
        return other.mesh is self.mesh and np.array_equal(self.mask, other.mask)

    def __repr__(self):
        return f"TriRegion({len(self)}/{self.mesh.n_triangles} triangles, area={self.area:.6g})"


@dataclass(eq=False)
class Cover:
    """Named family of regions on one mesh.

    ``fields[i]`` / ``thresholds[i]`` optionally record that set ``i`` is the
    super-level region ``{fields[i] > thresholds[i]}``.
    """

    regions: list
    names: list = None
    fields: list = None
    thresholds: list = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.regions = list(self.regions)
        if not self.regions:
            raise CoverError("a cover needs at least one set")
        mesh = self.regions[0].mesh
        for r in self.regions:
            if r.mesh is not mesh:
                raise MeshMismatchError("cover regions must share one mesh")
        n = len(self.regions)
        if self.names is None:
            self.names = [f"U{i + 1}" for i in range(n)]
        if self.fields is None:
            self.fields = [None] * n
        if self.thresholds is None:
            self.thresholds = [None] * n
        if not (len(self.names) == len(self.fields) == len(self.thresholds) == n):
            raise CoverError("names/fields/thresholds must match the number of sets")

    @property
    def mesh(self) -> Mesh:
        return self.regions[0].mesh

    def __len__(self):
        return len(self.regions)

    def __getitem__(self, i):
        return self.regions[i]

    def membership(self):
        """(N, F) boolean matrix: set i contains triangle t."""
        return np.stack([r.mask for r in self.regions])

    def subcover(self, indices: Sequence[int]) -> "Cover":
        idx = list(indices)
        return Cover(
            [self.regions[i] for i in idx],
            [self.names[i] for i in idx],
            [self.fields[i] for i in idx],
            [self.thresholds[i] for i in idx],
            dict(self.meta),
        )

    def without(self, i):
        return self.subcover([k for k in range(len(self)) if k != i])

    def uncovered(self):
        return np.flatnonzero(~self.membership().any(axis=0))


# ----------------------------------------------------------------------


def region_from_predicate(mesh: Mesh, pred: Callable, mode: str = "strict") -> TriRegion:
    """Triangles whose vertices satisfy ``pred``.

    ``pred`` maps an (V, d) array of vertex positions to a boolean array (a
    scalar-valued predicate is applied row by row).  ``strict`` keeps triangles
    with all three vertices inside, ``majority`` those with at least two.
    """
    if mode not in ("strict", "majority"):
        raise ValueError(f"unknown mode {mode!r}")
    pos = mesh.vertices
    try:
        inside = np.asarray(pred(pos))
        if inside.shape != (mesh.n_vertices,):
            raise ValueError
    except (ValueError, TypeError):
        inside = np.array([bool(pred(p)) for p in pos])
    inside = np.broadcast_to(inside.astype(bool), (mesh.n_vertices,))
    k = inside[mesh.triangles].sum(axis=1)
    return TriRegion(mesh, k == 3 if mode == "strict" else k >= 2)


def is_cover(c: Cover) -> bool:
    return bool(c.membership().any(axis=0).all())


def _signature_sets(c: Cover):
    """Collapse triangles with equal membership; returns per-set bitmasks over
    the distinct membership patterns."""
    memb = c.membership()
    patterns = np.unique(memb.T, axis=0)  # (P, N)
    sets = []
    for i in range(len(c)):
        bits = 0
        for p in np.flatnonzero(patterns[:, i]):
            bits |= 1 << int(p)
        sets.append(bits)
    universe = (1 << len(patterns)) - 1
    return sets, universe


def _min_cover_size(sets, universe):
    """Exact minimum set cover by branch and bound."""
    n = len(sets)
    # greedy upper bound
    uncovered, used = universe, 0
    while uncovered:
        best = max(range(n), key=lambda i: (bin(sets[i] & uncovered).count("1"), -i))
        uncovered &= ~sets[best]
        used += 1
    best_size = used

    sizes = [bin(s).count("1") for s in sets]
    max_size = max(sizes)

    def lower(unc):
        return -(-bin(unc).count("1") // max_size)

    def search(unc, depth):
        nonlocal best_size
        if unc == 0:
            best_size = min(best_size, depth)
            return
        if depth + lower(unc) >= best_size:
            return
        # branch on the uncovered element with the fewest covering sets
        elem, cands = None, None
        u = unc
        while u:
            low = u & -u
            cs = [i for i in range(n) if sets[i] & low]
            if cands is None or len(cs) < len(cands):
                elem, cands = low, cs
                if len(cs) == 1:
                    break
            u ^= low
        cands.sort(key=lambda i: -bin(sets[i] & unc).count("1"))
        for i in cands:
            search(unc & ~sets[i], depth + 1)

    search(universe, 0)
    return best_size


def _lex_first_cover(sets, universe, k):
    """Lexicographically first index tuple of size k covering ``universe``."""
    n = len(sets)
    suffix = [0] * (n + 1)
    for i in range(n - 1, -1, -1):
        suffix[i] = suffix[i + 1] | sets[i]

    def dfs(start, unc, chosen):
        if unc == 0:
            return chosen
        if len(chosen) == k:
            return None
        for i in range(start, n - (k - len(chosen)) + 1):
            if unc & ~suffix[i]:
                return None
            r = dfs(i + 1, unc & ~sets[i], chosen + [i])
            if r is not None:
                return r
        return None

    return dfs(0, universe, [])


def smallest_subcover(c: Cover) -> list:
    """Indices of the lexicographically first subcover of size kappa(c)."""
    if not is_cover(c):
        raise CoverError("not a cover")
    if len(c) > MAX_KAPPA_SETS:
        raise CoverError(f"exact kappa limited to {MAX_KAPPA_SETS} sets, got {len(c)}")
    sets, universe = _signature_sets(c)
    k = _min_cover_size(sets, universe)
    return _lex_first_cover(sets, universe, k)


def kappa(c: Cover) -> int:
    """Minimal number of members of ``c`` that still cover the mesh."""
    return len(smallest_subcover(c))


def essential_sets(c: Cover) -> list:
    """Indices of the sets whose removal breaks the cover."""
    if not is_cover(c):
        raise CoverError("not a cover")
    memb = c.membership()
    private = memb & (memb.sum(axis=0) == 1)
    return [i for i in range(len(c)) if private[i].any()]


def private_triangles(c: Cover, i: int) -> np.ndarray:
    """Triangles covered by set ``i`` and by no other set."""
    memb = c.membership()
    return np.flatnonzero(memb[i] & (memb.sum(axis=0) == 1))


def region_components(r: TriRegion) -> list:
    """Edge-connected components, ordered by smallest triangle index."""
    idx = r.indices
    if len(idx) == 0:
        return []
    sub = r.mesh.triangle_adjacency[idx][:, idx]
    ncomp, labels = connected_components(sub, directed=False)
    # labels are assigned in order of first appearance, i.e. by smallest index
    out = []
    for k in range(ncomp):
        out.append(TriRegion(r.mesh, idx[labels == k]))
    out.sort(key=lambda reg: int(reg.indices[0]))
    return out


def region_euler_characteristic(r: TriRegion) -> int:
    mesh = r.mesh
    tris = mesh.triangles[r.mask]
    nv = len(np.unique(tris))
    ne = len(np.unique(mesh.tri_edges[r.mask]))
    return nv - ne + len(tris)


def boundary_edges(r: TriRegion) -> np.ndarray:
    """Edges with exactly one adjacent triangle in ``r``."""
    et = r.mesh.edge_triangles
    inside = r.mask[et]
    return np.flatnonzero(inside[:, 0] != inside[:, 1])


def is_topological_disc(r: TriRegion) -> bool:
    """Connected, Euler characteristic 1 and a single simple boundary cycle."""
    if not r:
        raise CoverError("empty region")
    if len(region_components(r)) != 1:
        return False
    if region_euler_characteristic(r) != 1:
        return False
    be = r.mesh.edges[boundary_edges(r)]
    if len(be) == 0:
        return False
    verts, deg = np.unique(be, return_counts=True)
    if np.any(deg != 2) or len(verts) != len(be):
        return False
    # one cycle: the boundary graph is connected
    from scipy import sparse

    remap = np.searchsorted(verts, be)
    g = sparse.coo_matrix((np.ones(len(be)), (remap[:, 0], remap[:, 1])), shape=(len(verts),) * 2)
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


def region_area(r: TriRegion) -> float:
    return r.area

