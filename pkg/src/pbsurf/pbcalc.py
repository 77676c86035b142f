"""Bracket matrices, the exact noncommutativity magnitude nu_c, L1 bracket
sums, and a projected-subgradient search for small nu_c.

nu_c(F) = max over a, b in [-1, 1]^N of sup_M |{sum a_i f_i, sum b_j f_j}|.
For a fixed point the bilinear form a^T B b is maximized at cube vertices
and the inner maximum over b is sum_j |(B^T a)_j|, so nu_c is computed
exactly by enumerating sign vectors a with a_1 = +1.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from ._pykernels import sign_vectors
from .cover import Cover, is_topological_disc, smallest_subcover
from .partition import (
    PartitionOfUnity,
    _shrunk_supports,
    build_bump_partition,
    complementary_pair_partition,
)
from .rng import child_rng
from .surface import _bracket_from_grads, _grad3

__all__ = [
    "bracket_matrix",
    "inf_to_one_norm",
    "nu_c",
    "l1_bracket_sum",
    "max_bracket_sum",
    "lemma21_ratio",
    "Lemma21Ratio",
    "PbOptions",
    "PbEstimate",
    "minimize_pb",
]


def _bracket_from_values(mesh, values):
    g = _grad3(mesh, values)  # (N, F, 3)
    B = _bracket_from_grads(mesh.normals, g[:, None], g[None, :])  # (N, N, F)
    return np.ascontiguousarray(np.moveaxis(B, -1, 0)), g


def bracket_matrix(p: PartitionOfUnity) -> np.ndarray:
    """(F, N, N) array with ``B[t, i, j] = {f_i, f_j}`` on triangle ``t``."""
    return _bracket_from_values(p.mesh, p.values)[0]


def inf_to_one_norm(B, backend=None) -> float:
    """max over a, b in [-1, 1]^N of a^T B b for one N x N matrix."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("expected a square matrix")
    vals, _ = kernels.sign_norms(B[None], backend=backend)
    return float(vals[0])


def nu_c(p: PartitionOfUnity, backend=None) -> float:
    vals, _ = kernels.sign_norms(bracket_matrix(p), backend=backend)
    return float(vals.max()) if len(vals) else 0.0


def l1_bracket_sum(p: PartitionOfUnity) -> float:
    """sum_{i,j} of the integral of |{f_i, f_j}| over the surface."""
    B = bracket_matrix(p)
    return float(np.dot(np.abs(B).sum(axis=(1, 2)), p.mesh.tri_area_omega))


def max_bracket_sum(p: PartitionOfUnity) -> float:
    """max over triangles of sum_{i,j} |{f_i, f_j}|."""
    return float(np.abs(bracket_matrix(p)).sum(axis=(1, 2)).max())


class Lemma21Ratio(NamedTuple):
    nu_c: float
    max_sum: float
    ratio: float | None  # None when both sides vanish


def lemma21_ratio(p: PartitionOfUnity, backend=None) -> Lemma21Ratio:
    B = bracket_matrix(p)
    vals, _ = kernels.sign_norms(B, backend=backend)
    nu = float(vals.max())
    ms = float(np.abs(B).sum(axis=(1, 2)).max())
    return Lemma21Ratio(nu, ms, nu / ms if ms > 0 else None)


# ----------------------------------------------------------------------
# minimax search


@dataclass
class PbOptions:
    iterations: int = 200
    restarts: int = 3
    seed: int = 0
    eta0: float = 0.05
    margin: int = 2
    sharpness: float = 2.0
    noise: float = 0.5  # log-normal perturbation of the bump start for restarts > 0
    tol: float = 1e-12  # stop once nu_c falls below this


@dataclass
class PbEstimate:
    partition: PartitionOfUnity
    nu_c: float
    lower_bound: dict
    kappa: int
    trace: list = field(default_factory=list)
    restart_best: list = field(default_factory=list)
    budget_exhausted: bool = False

    def as_dict(self):
        return {
            "nu_c_upper": self.nu_c,
            "lower_bound": self.lower_bound,
            "kappa": self.kappa,
            "restart_best": self.restart_best,
            "iterations_run": len(self.trace),
            "trace_first_last": [self.trace[0], self.trace[-1]] if self.trace else [],
            "budget_exhausted": self.budget_exhausted,
        }


def _project(x, masks, k):
    """Flat-array version of project_to_feasible for the optimizer loop."""
    x = np.where(masks, np.maximum(x, 0.0), 0.0)
    s = x.sum(axis=0)
    dead = s == 0
    x = np.where(dead, 0.0, x / np.where(dead, 1.0, s))
    if dead.any():
        cols = np.flatnonzero(dead)
        share = 1.0 / k[cols]
        x[:, cols] = masks[:, cols] * share
        first = np.argmax(masks[:, cols], axis=0)
        x[first, cols] = 1.0 - (k[cols] - 1) * share
    return x


class _Iterate:
    """Optimizer state with per-triangle caches.

    A step moves the three vertices of one triangle, so only the brackets on
    the stars of those vertices are recomputed.
    """

    def __init__(self, mesh, x, backend):
        self.mesh = mesh
        self.backend = backend
        self.x = np.array(x, dtype=float)
        self.B, self.G = _bracket_from_values(mesh, self.x)
        self.G = np.ascontiguousarray(np.moveaxis(self.G, 0, 1))  # (F, N, 3)
        self.vals, self.arg = kernels.sign_norms(self.B, backend=backend)
        vt = mesh.vertex_triangles.tocsr()
        self._vt_ptr, self._vt_idx = vt.indptr, vt.indices

    def nu(self):
        return float(self.vals.max())

    def star(self, verts):
        parts = [self._vt_idx[self._vt_ptr[v] : self._vt_ptr[v + 1]] for v in verts]
        return np.unique(np.concatenate(parts))

    def refresh(self, tris):
        m = self.mesh
        t = m.triangles[tris]
        fv = self.x[:, t]  # (N, T, 3)
        d1 = fv[..., 1] - fv[..., 0]
        d2 = fv[..., 2] - fv[..., 0]
        g = d1[..., None] * m._w1[tris] + d2[..., None] * m._w2[tris]  # (N, T, 3)
        B = np.moveaxis(_bracket_from_grads(m.normals[tris], g[:, None], g[None, :]), -1, 0)
        self.B[tris] = B
        self.G[tris] = np.moveaxis(g, 0, 1)
        v, a = kernels.sign_norms(B, backend=self.backend)
        self.vals[tris] = v
        self.arg[tris] = a

    def subgradient(self, S):
        """Active triangle and the subgradient of nu_c on its three vertices."""
        m = self.mesh
        t = int(np.argmax(self.vals))
        a = S[self.arg[t]]
        c = a @ self.B[t]
        s = np.where(c >= 0, 1.0, -1.0)
        Gt = self.G[t]  # (N, 3)
        Gs, Ga = s @ Gt, a @ Gt
        w1, w2 = m._w1[t], m._w2[t]
        phis = np.stack([-w1 - w2, w1, w2])  # hat gradients of the three corners
        n = m.normals[t]

        def R(X):
            return np.cross(phis, X) @ n

        # d nu / d f_k(v) = a_k R_v(sum_j s_j G_j) - s_k R_v(sum_i a_i G_i)
        return t, np.outer(a, R(Gs)) - np.outer(s, R(Ga))


def _lower_bound(c: Cover, kap: int):
    area = c.mesh.total_area
    if kap <= 2:
        return {
            "statement": "kappa <= 2: a two-set subcover carries {f, 1-f} = 0, so pb = 0",
            "value": 0.0,
            "pb_positive": False,
        }
    discs = all(is_topological_disc(r) for r in c.regions if r)
    if discs:
        return {
            "statement": "disc cover with kappa >= 3: pb >= c / Area(M) for an absolute c > 0",
            "value": 0.0,
            "scale": 1.0 / area,
            "pb_positive": True,
        }
    return {"statement": "no lower bound applies (some set is not a disc)", "value": 0.0, "pb_positive": None}


def _subcover_start(c: Cover, witness, opts, supports):
    sub = c.subcover(witness)
    if len(sub) == 2:
        p = complementary_pair_partition(sub, opts.margin, opts.sharpness)
    else:
        p = build_bump_partition(sub, opts.margin, opts.sharpness)
    full = np.zeros((len(c), c.mesh.n_vertices))
    full[list(witness)] = p.values
    return PartitionOfUnity(c.mesh, full, supports, c)


def minimize_pb(c: Cover, opts: PbOptions | None = None, backend=None) -> PbEstimate:
    """Upper estimate of pb(c) by projected subgradient descent on nu_c.

    Restart 0 starts from the better of the bump partition of ``c`` and the
    bump partition of a smallest subcover (extended by zeros); later restarts
    start from log-normal perturbations of the bump.  Every iterate is
    feasible; the best one seen is returned.
    """
    opts = opts or PbOptions()
    mesh = c.mesh
    supports, masks = _shrunk_supports(c, opts.margin)
    if len(c) > kernels.MAX_SIGN_N:
        raise ValueError(f"nu_c enumeration limited to {kernels.MAX_SIGN_N} sets")
    k = masks.sum(axis=0)
    S = sign_vectors(len(c))
    witness = smallest_subcover(c)
    kap = len(witness)

    bump = build_bump_partition(c, opts.margin, opts.sharpness)
    starts = [bump.values]
    if len(c) == 2:
        starts.append(complementary_pair_partition(c, opts.margin, opts.sharpness).values)
    elif len(witness) < len(c):
        try:
            starts.append(_subcover_start(c, witness, opts, supports).values)
        except ValueError:
            pass

    best_val, best_x = math.inf, None
    trace, restart_best = [], []
    budget_exhausted = True
    for r in range(max(1, opts.restarts)):
        if r == 0:
            its = [_Iterate(mesh, x0, backend) for x0 in starts]
            state = min(its, key=lambda st: st.nu())
        else:
            rng = child_rng(opts.seed, "minimize_pb", r)
            x0 = _project(bump.values * np.exp(opts.noise * rng.standard_normal(bump.values.shape)), masks, k)
            state = _Iterate(mesh, x0, backend)
        run_best = math.inf
        for it in range(1, opts.iterations + 1):
            nu = state.nu()
            run_best = min(run_best, nu)
            if nu < best_val:
                best_val, best_x = nu, state.x.copy()
            trace.append(best_val)
            if best_val <= opts.tol:
                budget_exhausted = False
                break
            t, g = state.subgradient(S)
            gn = np.linalg.norm(g)
            if gn == 0:
                break
            verts = mesh.triangles[t]
            step = state.x[:, verts] - (opts.eta0 / math.sqrt(it)) * g / gn
            state.x[:, verts] = _project(step, masks[:, verts], k[verts])
            state.refresh(state.star(verts))
        nu = state.nu()
        run_best = min(run_best, nu)
        if nu < best_val:
            best_val, best_x = nu, state.x.copy()
            trace.append(best_val)
        restart_best.append(run_best)
        if not budget_exhausted:
            break
    best = PartitionOfUnity(mesh, best_x, supports, c)
    return PbEstimate(
        partition=best,
        nu_c=float(best_val),
        lower_bound=_lower_bound(c, kap),
        kappa=kap,
        trace=[float(v) for v in trace],
        restart_best=[float(v) for v in restart_best],
        budget_exhausted=budget_exhausted,
    )
