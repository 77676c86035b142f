"""Triangulated closed surfaces, piecewise-linear calculus and the discrete
Poisson bracket.

Two surface models are provided: an icosphere approximating the round sphere
(area form = induced Euclidean area of each flat triangle) and a flat torus
chart with periodic identification (area form = dx^dy).  Scalar fields are
vertex values interpolated linearly on each triangle, so gradients and
brackets are constant per triangle.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse

__all__ = [
    "Mesh",
    "ScalarField",
    "MeshError",
    "MeshMismatchError",
    "build_sphere_mesh",
    "build_torus_mesh",
    "pl_gradient",
    "poisson_bracket",
    "integrate",
    "save_mesh",
    "load_mesh",
]

MAX_SUBDIVISION = 8
DEGENERATE_REL_AREA = 1e-12


class MeshError(ValueError):
    """Invalid mesh construction or input."""


class MeshMismatchError(ValueError):
    """Fields defined on different meshes were combined."""


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Closed oriented triangle mesh carrying an area form.

    Parameters
    ----------
    vertices : (V, 3) array for ``topology="sphere"``, (V, 2) for ``"torus"``.
    triangles : (F, 3) int array, consistently oriented (counter-clockwise
        seen from outside / from +z in the flat chart).
    topology : ``"sphere"`` or ``"torus"``.
    period : ``(Lx, Ly)`` for the torus chart; ignored for the sphere.

    The mesh is immutable: all arrays are read-only.
    """

    def __init__(self, vertices, triangles, topology, period=None, validate=True):
        if topology not in ("sphere", "torus"):
            raise MeshError(f"unknown topology {topology!r}")
        self.topology = topology
        self.vertices = _readonly(np.asarray(vertices, dtype=float))
        self.triangles = _readonly(np.asarray(triangles, dtype=np.int64))
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (F, 3) array")
        if topology == "torus":
            if period is None:
                raise MeshError("torus mesh needs a period (Lx, Ly)")
            self.period = (float(period[0]), float(period[1]))
            if self.vertices.shape[1] != 2:
                raise MeshError("torus vertices must be 2D")
        else:
            self.period = None
            if self.vertices.shape[1] != 3:
                raise MeshError("sphere vertices must be 3D")
        if self.triangles.size and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise MeshError("triangle index out of range")

        self.corners = _readonly(self._unwrapped_corners())
        e1 = self.corners[:, 1] - self.corners[:, 0]
        e2 = self.corners[:, 2] - self.corners[:, 0]
        cr = np.cross(e1, e2)
        dbl = np.linalg.norm(cr, axis=1)
        if validate:
            self._check_areas(cr, dbl)
        self.tri_area_omega = _readonly(0.5 * dbl)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.normals = _readonly(cr / dbl[:, None])
        # gradients of the hat functions of corners 1 and 2 (corner 0 is implied)
        n = self.normals
        p0, p1, p2 = self.corners[:, 0], self.corners[:, 1], self.corners[:, 2]
        with np.errstate(invalid="ignore", divide="ignore"):
            self._w1 = _readonly(np.cross(n, p0 - p2) / dbl[:, None])
            self._w2 = _readonly(np.cross(n, p1 - p0) / dbl[:, None])
        self._build_edges()
        if validate:
            self._check_topology()

    # ------------------------------------------------------------------
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def dim(self):
        """Dimension of vertex coordinates (3 on the sphere, 2 on the torus)."""
        return self.vertices.shape[1]

    @property
    def total_area(self):
        return float(self.tri_area_omega.sum())

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_triangles

    def field(self, values) -> "ScalarField":
        return ScalarField(self, values)

    def field_from(self, fn) -> "ScalarField":
        """Sample a vectorized function of vertex coordinates.

        ``fn`` receives the coordinate columns (``x1, x2, x3`` on the sphere,
        ``x, y`` on the torus) as separate arrays.
        """
        return ScalarField(self, fn(*self.vertices.T))

    # ------------------------------------------------------------------
    def _unwrapped_corners(self):
        pts = self.vertices[self.triangles]
        if self.topology == "torus":
            per = np.array(self.period)
            base = pts[:, :1, :]
            d = pts - base
            d -= per * np.round(d / per)
            pts = base + d
            pts = np.concatenate([pts, np.zeros(pts.shape[:2] + (1,))], axis=2)
        return pts

    def _check_areas(self, cr, dbl):
        if self.n_triangles == 0:
            raise MeshError("mesh has no triangles")
        scale = dbl.max()
        if np.any(dbl <= DEGENERATE_REL_AREA * scale):
            bad = np.flatnonzero(dbl <= DEGENERATE_REL_AREA * scale)
            raise MeshError(f"degenerate triangles: {bad[:10].tolist()}")
        if self.topology == "torus":
            if np.any(cr[:, 2] <= 0):
                raise MeshError("torus triangles must be counter-clockwise in the chart")
        else:
            centroid = self.corners.mean(axis=1)
            if np.any(np.einsum("ij,ij->i", cr, centroid) <= 0):
                raise MeshError("sphere triangles must be oriented outward")

    def _build_edges(self):
        t = self.triangles
        # local edge k joins corners k and k+1
        a = t
        b = np.roll(t, -1, axis=1)
        lo = np.minimum(a, b).ravel()
        hi = np.maximum(a, b).ravel()
        keys = lo * self.n_vertices + hi
        uniq, inv, counts = np.unique(keys, return_inverse=True, return_counts=True)
        self.edges = _readonly(np.stack([uniq // self.n_vertices, uniq % self.n_vertices], axis=1))
        self.tri_edges = _readonly(inv.reshape(-1, 3))
        self._edge_counts = counts
        self._directed = a.ravel() * self.n_vertices + b.ravel()

    def _check_topology(self):
        if np.any(self._edge_counts != 2):
            raise MeshError("mesh is not closed: some edge is not shared by exactly two triangles")
        if len(np.unique(self._directed)) != len(self._directed):
            raise MeshError("triangles are not consistently oriented")
        chi = self.euler_characteristic
        want = 2 if self.topology == "sphere" else 0
        if chi != want:
            raise MeshError(f"Euler characteristic {chi} does not match {self.topology}")

    # ------------------------------------------------------------------
    @cached_property
    def edge_triangles(self):
        """(E, 2) array: the two triangles sharing each edge."""
        order = np.argsort(self.tri_edges.ravel(), kind="stable")
        tris = order // 3
        return _readonly(tris.reshape(-1, 2))

    @cached_property
    def triangle_adjacency(self):
        """Sparse (F, F) edge-adjacency matrix of triangles."""
        et = self.edge_triangles
        F = self.n_triangles
        data = np.ones(2 * len(et), dtype=np.int8)
        rows = np.concatenate([et[:, 0], et[:, 1]])
        cols = np.concatenate([et[:, 1], et[:, 0]])
        return sparse.csr_matrix((data, (rows, cols)), shape=(F, F))

    @cached_property
    def vertex_adjacency(self):
        """Sparse (V, V) adjacency matrix of the edge graph."""
        e = self.edges
        V = self.n_vertices
        data = np.ones(2 * len(e), dtype=np.int8)
        return sparse.csr_matrix(
            (data, (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))),
            shape=(V, V),
        )

    @cached_property
    def vertex_triangles(self):
        """Sparse (V, F) incidence matrix."""
        F = self.n_triangles
        rows = self.triangles.ravel()
        cols = np.repeat(np.arange(F), 3)
        return sparse.csr_matrix((np.ones(3 * F, dtype=np.int32), (rows, cols)), shape=(self.n_vertices, F))

    @cached_property
    def vertex_degree(self):
        return _readonly(np.asarray(self.vertex_triangles.sum(axis=1)).ravel())

    @cached_property
    def max_edge_length(self):
        c = self.corners
        d = np.linalg.norm(c - np.roll(c, -1, axis=1), axis=2)
        return float(d.max())

    def __repr__(self):
        return (
            f"Mesh({self.topology}, V={self.n_vertices}, E={self.n_edges}, "
            f"F={self.n_triangles}, area={self.total_area:.6g})"
        )


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Per-vertex values of a piecewise-linear function on ``mesh``."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.mesh.n_vertices,):
            raise ValueError(f"field needs {self.mesh.n_vertices} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def tri_values(self):
        """(F, 3) vertex values per triangle corner."""
        return self.values[self.mesh.triangles]

    def __add__(self, other):
        _same_mesh(self, other)
        return ScalarField(self.mesh, self.values + other.values)

    def __rmul__(self, a):
        return ScalarField(self.mesh, float(a) * self.values)

    def __neg__(self):
        return ScalarField(self.mesh, -self.values)

    def minmax(self):
        return float(self.values.min()), float(self.values.max())


def _same_mesh(f, g):
    if f.mesh is not g.mesh:
        raise MeshMismatchError("fields live on different meshes")


# ----------------------------------------------------------------------
# constructors

_ICO_PHI = (1.0 + 5.0 ** 0.5) / 2.0
# Fixed generic orientation of the base icosahedron.  The axis-aligned one
# puts whole families of subdivision vertices on the coordinate planes,
# which makes x_i = 0 a degenerate level for every coordinate field.
_ICO_ANGLES = (0.3, 0.7, 1.1)


def _rotation(a, b, c):
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rz @ ry @ rx


def _icosahedron():
    p = _ICO_PHI
    v = np.array(
        [
            [-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
            [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
            [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ],
        dtype=np.int64,
    )
    v = v @ _rotation(*_ICO_ANGLES).T
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def _subdivide(v, f):
    """One round of 1-to-4 midpoint subdivision, midpoints projected to |x|=1."""
    nv = len(v)
    a, b, c = f[:, 0], f[:, 1], f[:, 2]
    pairs = np.stack([np.stack([a, b], 1), np.stack([b, c], 1), np.stack([c, a], 1)], 1).reshape(-1, 2)
    lo, hi = pairs.min(1), pairs.max(1)
    keys = lo * nv + hi
    uniq, inv = np.unique(keys, return_inverse=True)
    mids = v[uniq // nv] + v[uniq % nv]
    mids /= np.linalg.norm(mids, axis=1, keepdims=True)
    m = (inv + nv).reshape(-1, 3)
    mab, mbc, mca = m[:, 0], m[:, 1], m[:, 2]
    nf = np.concatenate(
        [
            np.stack([a, mab, mca], 1),
            np.stack([b, mbc, mab], 1),
            np.stack([c, mca, mbc], 1),
            np.stack([mab, mbc, mca], 1),
        ]
    )
    return np.vstack([v, mids]), nf


def build_sphere_mesh(subdivision_level: int, radius: float = 1.0) -> Mesh:
    """Icosphere with ``20 * 4**subdivision_level`` triangles on the sphere of
    the given radius."""
    if not isinstance(subdivision_level, (int, np.integer)) or not 0 <= subdivision_level <= MAX_SUBDIVISION:
        raise MeshError(f"subdivision level must be an integer in [0, {MAX_SUBDIVISION}]")
    if not radius > 0:
        raise MeshError("radius must be positive")
    v, f = _icosahedron()
    for _ in range(int(subdivision_level)):
        v, f = _subdivide(v, f)
    return Mesh(radius * v, f, "sphere")


def build_torus_mesh(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0) -> Mesh:
    """Flat torus [0, Lx) x [0, Ly) on an ``nx`` by ``ny`` grid, two
    triangles per cell."""
    if nx < 3 or ny < 3:
        raise MeshError("torus grid needs nx, ny >= 3")
    if not (Lx > 0 and Ly > 0):
        raise MeshError("torus side lengths must be positive")
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    verts = np.stack([i.ravel() * (Lx / nx), j.ravel() * (Ly / ny)], axis=1)

    def idx(ii, jj):
        return (ii % nx) * ny + (jj % ny)

    i, j = i.ravel(), j.ravel()
    v00, v10, v11, v01 = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
    tris = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    return Mesh(verts, tris, "torus", period=(Lx, Ly))


# ----------------------------------------------------------------------
# PL calculus


def _grad3(mesh, values):
    """3D per-triangle gradients of PL fields; ``values`` is (..., V)."""
    t = mesh.triangles
    fv = values[..., t]  # (..., F, 3)
    d1 = fv[..., 1] - fv[..., 0]
    d2 = fv[..., 2] - fv[..., 0]
    return d1[..., None] * mesh._w1 + d2[..., None] * mesh._w2


def pl_gradient(f: ScalarField) -> np.ndarray:
    """Per-triangle gradient of the linear interpolant of ``f``.

    Returns an (F, 3) array of vectors in the triangle planes on the sphere,
    and an (F, 2) array of chart vectors on the torus.
    """
    g = _grad3(f.mesh, f.values)
    return g[:, : f.mesh.dim]


def _bracket_from_grads(n, ga, gb):
    """(ga x gb) . n written out so that antisymmetry holds bit for bit."""
    c0 = ga[..., 1] * gb[..., 2] - ga[..., 2] * gb[..., 1]
    c1 = ga[..., 2] * gb[..., 0] - ga[..., 0] * gb[..., 2]
    c2 = ga[..., 0] * gb[..., 1] - ga[..., 1] * gb[..., 0]
    return n[:, 0] * c0 + n[:, 1] * c1 + n[:, 2] * c2


def poisson_bracket(f: ScalarField, g: ScalarField) -> np.ndarray:
    """Per-triangle density {f, g} = (df ^ dg) / omega.

    On the torus this is ``f_x g_y - f_y g_x``; on the sphere it is
    ``(grad f x grad g) . n`` with ``n`` the outward unit normal.
    """
    _same_mesh(f, g)
    m = f.mesh
    return _bracket_from_grads(m.normals, _grad3(m, f.values), _grad3(m, g.values))


def integrate(mesh: Mesh, density) -> float:
    """Integral of a per-triangle density against the area form."""
    d = np.asarray(density, dtype=float)
    if d.shape != (mesh.n_triangles,):
        raise ValueError("density must have one value per triangle")
    return float(np.dot(d, mesh.tri_area_omega))


# ----------------------------------------------------------------------
# plain-text mesh format

MESH_MAGIC = "pbsurf-mesh 1"


def save_mesh(mesh: Mesh, path) -> None:
    """Write ``mesh`` in the plain-text format (see README)."""
    lines = [MESH_MAGIC, f"topology {mesh.topology}"]
    if mesh.topology == "torus":
        lines.append(f"period {mesh.period[0]!r} {mesh.period[1]!r}")
    lines.append(f"vertices {mesh.n_vertices}")
    lines.extend(" ".join(repr(float(x)) for x in row) for row in mesh.vertices)
    lines.append(f"triangles {mesh.n_triangles}")
    lines.extend(" ".join(str(int(i)) for i in row) for row in mesh.triangles)
    lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_mesh_lines(lines, path):
    pos = 1

    def expect(key):
        nonlocal pos
        parts = lines[pos].split()
        if parts[0] != key:
            raise MeshError(f"{path}: expected '{key}' line, got {lines[pos]!r}")
        pos += 1
        return parts[1:]

    topology = expect("topology")[0]
    period = None
    if topology == "torus":
        period = tuple(float(x) for x in expect("period"))
    nv = int(expect("vertices")[0])
    verts = np.array([[float(x) for x in lines[pos + k].split()] for k in range(nv)])
    pos += nv
    nt = int(expect("triangles")[0])
    tris = np.array([[int(x) for x in lines[pos + k].split()] for k in range(nt)], dtype=np.int64)
    pos += nt
    if pos >= len(lines) or lines[pos] != "end":
        raise MeshError(f"{path}: missing 'end' line")
    return topology, period, verts, tris


def load_mesh(path) -> Mesh:
    with open(path, encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or lines[0] != MESH_MAGIC:
        raise MeshError(f"{path}: missing '{MESH_MAGIC}' header")
    try:
        topology, period, verts, tris = _parse_mesh_lines(lines, path)
    except (IndexError, ValueError) as e:
        if isinstance(e, MeshError):
            raise
        raise MeshError(f"{path}: truncated or malformed mesh file ({e})") from None
    return Mesh(verts, tris, topology, period=period)
