"""Random super-level covers, permutation curve unions and crossing counts.

For a partition (f_i) and a level L, thresholds s_{i,k} are drawn uniformly
from the intervals [(k-1)/L, k/L] and define the super-level covers
U_{i,k} = {f_i > s_{i,k}}.  Two independent draws s, t give two covers whose
boundaries are level curves; the total number of crossings between the two
boundary families averages to L^2 * sum_{i,j} int |{f_i, f_j}| by the coarea
identity, which is what :func:`averaging_experiment` measures.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .cover import Cover, CoverError, is_cover, is_topological_disc, kappa
from .levelsets import DegenerateIncidenceError, Segments, level_segments, superlevel_region
from .partition import PartitionOfUnity
from .pbcalc import l1_bracket_sum
from .rng import as_rng, child_rng

__all__ = [
    "IntervalGrid",
    "Thresholds",
    "PermCurveSet",
    "sample_thresholds",
    "levelset_cover",
    "pointwise_multiplicity",
    "gamma_curves",
    "boundary_segments",
    "curve_intersection_count",
    "total_boundary_crossings",
    "lemma34_check",
    "averaging_experiment",
    "worker_count",
]

REGULARITY_GAP = 1e-9
MAX_RETRIES = 16


def worker_count():
    """Thread cap from ``PBSURF_THREADS`` (default 1)."""
    raw = os.environ.get("PBSURF_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PBSURF_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"PBSURF_THREADS must be a positive integer, got {raw!r}")
    return n


def _map(fn, items):
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))  # results come back in input order


@dataclass(frozen=True)
class IntervalGrid:
    """Intervals [(k-1)/L, k/L], k = 1..m_i, for each partition field.

    ``m_i = floor(L * max f_i) + 1`` so the top interval lies above the
    field's range.
    """

    L: int
    m: tuple
    vertex_values: tuple  # sorted vertex values per field, for regularity

    @classmethod
    def for_partition(cls, p: PartitionOfUnity, L: int):
        L = int(L)
        if L < 1:
            raise ValueError("L must be a positive integer")
        m = tuple(int(math.floor(L * float(row.max()))) + 1 for row in p.values)
        vv = tuple(np.sort(row) for row in p.values)
        return cls(L, m, vv)

    @property
    def n_sets(self):
        return int(sum(self.m))

    def index(self):
        """(field, k) for every set, k counted from 1."""
        return [(i, k) for i, mi in enumerate(self.m) for k in range(1, mi + 1)]


@dataclass(frozen=True)
class Thresholds:
    grid: IntervalGrid
    values: tuple  # one array of length m_i per field

    def flat(self):
        return np.concatenate(self.values)


def sample_thresholds(grid: IntervalGrid, seed) -> Thresholds:
    """One uniform draw per interval; draws within 1e-9 of a vertex value of
    the same field are redrawn."""
    rng = as_rng(seed)
    out = []
    for mi, vv in zip(grid.m, grid.vertex_values):
        lo = np.arange(mi) / grid.L
        s = lo + rng.random(mi) / grid.L
        for _ in range(1000):
            j = np.clip(np.searchsorted(vv, s), 1, max(len(vv) - 1, 1))
            near = np.minimum(np.abs(vv[j - 1] - s), np.abs(vv[np.minimum(j, len(vv) - 1)] - s)) < REGULARITY_GAP
            if not near.any():
                break
            s[near] = lo[near] + rng.random(int(near.sum())) / grid.L
        out.append(s)
    return Thresholds(grid, tuple(out))


def pointwise_multiplicity(p: PartitionOfUnity, s: Thresholds) -> np.ndarray:
    """#{(i, k): f_i(x) > s_{i,k}} at every vertex and triangle barycentre."""
    mesh = p.mesh
    pts = np.concatenate([p.values, p.values[:, mesh.triangles].mean(axis=2)], axis=1)
    mult = np.zeros(pts.shape[1], dtype=np.int64)
    for row, lev in zip(pts, s.values):
        mult += np.searchsorted(np.sort(lev), row, side="left")
    return mult


def levelset_cover(p: PartitionOfUnity, s: Thresholds) -> Cover:
    """The family {superlevel_region(f_i, s_{i,k})} with fields attached.

    Raises CoverError when the triangle regions fail to cover the mesh.
    """
    fields = p.fields
    regions, names, fl, th = [], [], [], []
    for i, lev in enumerate(s.values):
        for k, sk in enumerate(lev, start=1):
            regions.append(superlevel_region(fields[i], float(sk)))
            names.append(f"U[{i + 1},{k}]")
            fl.append(fields[i])
            th.append(float(sk))
    mult = pointwise_multiplicity(p, s)
    tri_mult = np.sum([r.mask for r in regions], axis=0)
    c = Cover(
        regions,
        names,
        fl,
        th,
        meta={
            "L": s.grid.L,
            "field_index": [i for i, mi in enumerate(s.grid.m) for _ in range(mi)],
            "min_pointwise_multiplicity": int(mult.min()),
            "min_triangle_multiplicity": int(tri_mult.min()),
        },
    )
    if not is_cover(c):
        raise CoverError(
            f"super-level regions at L={s.grid.L} leave {len(c.uncovered())} triangles uncovered; "
            "use a finer mesh or a smaller L"
        )
    return c


# ----------------------------------------------------------------------
# boundary families and permutation curves


def _need_fields(c):
    for name, f, t in zip(c.names, c.fields, c.thresholds):
        if f is None or t is None:
            raise CoverError(f"set {name} has no defining field and threshold")


def _field_groups(c):
    """Sets grouped by defining field: list of (field, set indices)."""
    groups = {}
    for j, f in enumerate(c.fields):
        groups.setdefault(id(f), (f, []))[1].append(j)
    return list(groups.values())


def boundary_segments(c: Cover) -> Segments:
    """Level-curve segments of every set, tagged by set index (cached)."""
    cached = getattr(c, "_boundary_cache", None)
    if cached is not None:
        return cached
    _need_fields(c)
    parts = []
    for f, idx in _field_groups(c):
        th = np.array([c.thresholds[j] for j in idx], dtype=float)
        order = np.argsort(th, kind="stable")
        seg, col = level_segments(f.tri_values(), th[order])
        if len(col):
            j = idx[order[col[0, 1]]]
            raise DegenerateIncidenceError(f"threshold of {c.names[j]} equals a vertex value")
        seg.tag = np.asarray(idx, dtype=np.int64)[order][seg.tag]
        parts.append(seg)
    out = Segments.concat(parts)
    order = np.argsort(out.tag, kind="stable")
    out = Segments(out.tri[order], out.p0[order], out.p1[order], out.tag[order])
    c._boundary_cache = out
    return out


@dataclass
class PermCurveSet:
    """Boundary pieces of the sets taken in the order ``alpha``; piece k keeps
    the points of the k-th boundary where every earlier set's field is at or
    below its threshold."""

    alpha: tuple
    pieces: Segments  # tag = set index of the parent boundary
    predicate: str = "f_alpha(j) <= s_alpha(j) for all earlier j"

    def __len__(self):
        return len(self.pieces)

    def is_empty(self):
        return len(self.pieces) == 0


def _eval_at(field_tri_vals, tri, p):
    v = field_tri_vals[tri]
    return (1 - p[:, 0] - p[:, 1]) * v[:, 0] + p[:, 0] * v[:, 1] + p[:, 1] * v[:, 2]


def gamma_curves(c: Cover, alpha) -> PermCurveSet:
    _need_fields(c)
    alpha = tuple(int(a) for a in alpha)
    n = len(c)
    if sorted(alpha) != list(range(n)):
        raise ValueError("alpha must be a permutation of the set indices")
    seg = boundary_segments(c)
    groups = _field_groups(c)
    # cap[j, g]: smallest threshold among the sets of field group g placed
    # before set j; the earlier-set predicate reduces to f_g <= cap
    cap = np.full((n, len(groups)), np.inf)
    gid = np.empty(n, dtype=np.int64)
    for g, (_, idx) in enumerate(groups):
        gid[idx] = g
    run = np.full(len(groups), np.inf)
    for j in alpha:
        cap[j] = run
        run[gid[j]] = min(run[gid[j]], c.thresholds[j])
    lo = np.zeros(len(seg))
    hi = np.ones(len(seg))
    for g, (f, _) in enumerate(groups):
        bound = cap[seg.tag, g]
        act = np.isfinite(bound)
        if not act.any():
            continue
        tv = f.tri_values()
        h0 = _eval_at(tv, seg.tri, seg.p0) - bound
        h1 = _eval_at(tv, seg.tri, seg.p1) - bound
        # keep tau in [0, 1] with h0 + tau (h1 - h0) <= 0
        out = act & (h0 > 0) & (h1 > 0)
        lo[out], hi[out] = 1.0, 0.0
        cut = act & ((h0 > 0) != (h1 > 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            tau = h0 / (h0 - h1)
        enter = cut & (h0 > 0)
        leave = cut & (h1 > 0)
        lo[enter] = np.maximum(lo[enter], tau[enter])
        hi[leave] = np.minimum(hi[leave], tau[leave])
    keep = hi > lo
    d = seg.p1[keep] - seg.p0[keep]
    q0 = seg.p0[keep] + lo[keep, None] * d
    q1 = seg.p0[keep] + hi[keep, None] * d
    return PermCurveSet(alpha, Segments(seg.tri[keep], q0, q1, seg.tag[keep]))


def _crossings(sa: Segments, sb: Segments, na=1, nb=1):
    a = sa if na > 1 else sa.retag(0)
    b = sb if nb > 1 else sb.retag(0)
    counts, degen = kernels.count_crossings(a.as_tuple(), b.as_tuple(), na, nb)
    if degen.any():
        raise DegenerateIncidenceError(f"{int(degen.sum())} degenerate segment incidences")
    return counts


def curve_intersection_count(A: PermCurveSet, B: PermCurveSet) -> int:
    if A.is_empty() or B.is_empty():
        return 0
    return int(_crossings(A.pieces, B.pieces)[0, 0])


def total_boundary_crossings(cs: Cover, ct: Cover) -> int:
    """#(union over all pairs of boundary_s(i,k) n boundary_t(j,l))."""
    sa, sb = boundary_segments(cs), boundary_segments(ct)
    if len(sa) == 0 or len(sb) == 0:
        return 0
    return int(_crossings(sa, sb)[0, 0])


# ----------------------------------------------------------------------
# experiments


def _hypotheses(p: PartitionOfUnity, L: int):
    """(ok, reasons, info) for the reduction's hypotheses on the partition."""
    reasons = []
    info = {"L": int(L), "n_fields": p.N, "L_hat": int(L) + 1 - p.N}
    if L <= p.N:
        reasons.append(f"L={L} must exceed the number of fields {p.N}")
    c = p.cover
    if c is None:
        reasons.append("partition has no cover attached")
    else:
        k = kappa(c)
        discs = [bool(r) and is_topological_disc(r) for r in c.regions]
        info.update(kappa=k, discs=discs)
        if k < 3:
            reasons.append(f"kappa={k} < 3")
        if not all(discs):
            reasons.append("some cover set is not a topological disc")
    return not reasons, reasons, info


def _draw_pair(p, grid, seed, stream, index):
    """Threshold pair and both covers, redrawn on degeneracy (bounded)."""
    last = None
    for attempt in range(MAX_RETRIES):
        j = index * MAX_RETRIES + attempt
        s = sample_thresholds(grid, child_rng(seed, stream + "/s", j))
        t = sample_thresholds(grid, child_rng(seed, stream + "/t", j))
        cs, ct = levelset_cover(p, s), levelset_cover(p, t)
        try:
            n = total_boundary_crossings(cs, ct)
        except DegenerateIncidenceError as e:
            last = e
            continue
        return s, t, cs, ct, n, attempt
    raise DegenerateIncidenceError(f"degenerate after {MAX_RETRIES} redraws: {last}")


def lemma34_check(p: PartitionOfUnity, L: int, seed: int = 0, n_perm_samples: int = 20, n_pairs: int = 1) -> dict:
    """Crossing bound for random super-level covers of ``p``.

    Draws (s, t), checks the hypotheses (kappa >= 3 disc cover, L > |I|,
    pointwise multiplicity >= L - |I|), then requires the total boundary
    crossing count to reach (L + 1 - |I|)^2 and each sampled permutation pair
    (alpha, beta) to give at least one crossing.  ``status`` is "pass",
    "fail" or "inconclusive" (hypotheses not met or unresolved degeneracy).
    """
    L = int(L)
    ok, reasons, info = _hypotheses(p, L)
    report = {"hypotheses": info, "status": "inconclusive", "reasons": reasons}
    if not ok:
        return report
    grid = IntervalGrid.for_partition(p, L)
    L_hat = L + 1 - p.N
    bound = L_hat * L_hat
    need_mult = L - p.N
    pairs = []
    status = "pass"
    for n in range(int(n_pairs)):
        try:
            s, t, cs, ct, total, retries = _draw_pair(p, grid, seed, "lemma34", n)
        except DegenerateIncidenceError as e:
            report["reasons"] = [str(e)]
            return report
        except CoverError as e:
            report["reasons"] = [f"super-level cover check failed: {e}"]
            return report
        mult = min(cs.meta["min_pointwise_multiplicity"], ct.meta["min_pointwise_multiplicity"])
        if mult < need_mult:
            report["reasons"] = [f"pointwise multiplicity {mult} < L - |I| = {need_mult}"]
            return report
        rng = child_rng(seed, "lemma34/perm", n)
        perm_counts, perm_nonempty = [], []
        perm_degenerate = 0
        for _ in range(int(n_perm_samples)):
            a = rng.permutation(len(cs))
            b = rng.permutation(len(ct))
            A, B = gamma_curves(cs, a), gamma_curves(ct, b)
            try:
                perm_counts.append(curve_intersection_count(A, B))
            except DegenerateIncidenceError:
                perm_degenerate += 1
                continue
            perm_nonempty.append(not A.is_empty() and not B.is_empty())
        step2 = all(c >= 1 for c, ne in zip(perm_counts, perm_nonempty) if ne)
        total_ok = total >= bound
        if not (total_ok and step2):
            status = "fail"
        pairs.append(
            {
                "total_crossings": total,
                "bound": bound,
                "total_ok": total_ok,
                "redraws": retries,
                "min_pointwise_multiplicity": mult,
                "min_triangle_multiplicity": min(
                    cs.meta["min_triangle_multiplicity"], ct.meta["min_triangle_multiplicity"]
                ),
                "perm_counts": perm_counts,
                "perm_min": min(perm_counts) if perm_counts else None,
                "perm_mean": float(np.mean(perm_counts)) if perm_counts else None,
                "perm_degenerate": perm_degenerate,
                "perm_each_at_least_one": step2,
            }
        )
    report.update(status=status, reasons=[], L_hat=L_hat, bound=bound, pairs=pairs)
    return report


def averaging_experiment(p: PartitionOfUnity, L: int, n_samples: int = 200, seed: int = 0) -> dict:
    """Monte-Carlo mean of the total crossing count over random (s, t).

    ``implied = mean / L^2`` estimates sum_{i,j} int |{f_i, f_j}| without
    bias.  Checks: implied <= l1 + 3 sigma and, when the cover has kappa >= 3,
    implied >= (L + 1 - |I|)^2 / L^2 - 3 sigma, with sigma the Monte-Carlo
    standard error of ``implied``.  Every per-sample count is also compared
    with (L + 1 - |I|)^2.
    """
    L = int(L)
    if L <= p.N:
        raise ValueError(f"L={L} must exceed the number of fields {p.N}")
    grid = IntervalGrid.for_partition(p, L)
    L_hat = L + 1 - p.N

    def one(n):
        _, _, _, _, total, retries = _draw_pair(p, grid, seed, "averaging", n)
        return total, retries

    res = _map(one, range(int(n_samples)))
    counts = np.array([r[0] for r in res], dtype=np.int64)
    redraws = int(sum(r[1] for r in res))
    mean = float(counts.mean())
    sd = float(counts.std(ddof=1)) if len(counts) > 1 else 0.0
    sigma = sd / math.sqrt(len(counts)) / L**2
    implied = mean / L**2
    l1 = l1_bracket_sum(p)
    bound = L_hat**2 / L**2
    k = kappa(p.cover) if p.cover is not None else None
    gated = k is not None and k >= 3
    upper_ok = implied <= l1 + 3 * sigma
    lower_ok = implied >= bound - 3 * sigma if gated else None
    per_sample_ok = bool((counts >= L_hat**2).all()) if gated else None
    return {
        "L": L,
        "n_samples": int(n_samples),
        "seed": int(seed),
        "counts": counts.tolist(),
        "min_count": int(counts.min()),
        "mean_count": mean,
        "sigma_mc": sigma,
        "implied_lower_bound": implied,
        "l1_bracket_sum": l1,
        "bound": bound,
        "count_bound": L_hat**2,
        "kappa": k,
        "bound_applies": gated,
        "upper_ok": bool(upper_ok),
        "lower_ok": lower_ok,
        "per_sample_ok": per_sample_ok,
        "redraws": redraws,
    }
