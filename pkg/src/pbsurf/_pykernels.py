"""Pure numpy implementations of the hot loops.

These define the reference semantics of the compiled backend: identical
summation order, identical tie-breaking.
"""
import numpy as np

# sign-enumeration blocks are chunked so the (F, M, N) work array stays small
_CHUNK_ELEMS = 1 << 22


def sign_vectors(N):
    """All a in {-1, 1}^N with a[0] = +1, in enumeration order.

    Row m has a[i] = -1 iff bit (i - 1) of m is set.
    """
    if N == 0:
        return np.ones((1, 0))
    m = np.arange(1 << (N - 1))[:, None]
    bits = (m >> np.arange(N - 1)[None, :]) & 1
    return np.concatenate([np.ones((len(m), 1)), 1.0 - 2.0 * bits], axis=1)


def sign_norms(B):
    B = np.ascontiguousarray(B, dtype=np.float64)
    F, N = B.shape[0], B.shape[1]
    out = np.zeros(F)
    arg = np.zeros(F, dtype=np.int64)
    if F == 0 or N == 0:
        return out, arg
    S = sign_vectors(N)
    M = len(S)
    step = max(1, _CHUNK_ELEMS // (M * N))
    for lo in range(0, F, step):
        Bc = B[lo : lo + step]
        c = np.zeros((len(Bc), M, N))
        for i in range(N):
            c = c + S[None, :, i, None] * Bc[:, None, i, :]
        val = np.zeros((len(Bc), M))
        for j in range(N):
            val = val + np.abs(c[:, :, j])
        arg[lo : lo + step] = np.argmax(val, axis=1)
        out[lo : lo + step] = val[np.arange(len(Bc)), arg[lo : lo + step]]
    return out, arg


def _runs(tri):
    u, start, cnt = np.unique(tri, return_index=True, return_counts=True)
    return u, start, cnt


def _orient(p, q, r):
    return (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (q[:, 1] - p[:, 1]) * (r[:, 0] - p[:, 0])


def count_crossings(tri_a, a0, a1, tag_a, tri_b, b0, b1, tag_b, na, nb):
    counts = np.zeros((na, nb), dtype=np.int64)
    degen = np.zeros((na, nb), dtype=np.int64)
    if len(tri_a) == 0 or len(tri_b) == 0:
        return counts, degen
    ua, sa, ca = _runs(tri_a)
    ub, sb, cb = _runs(tri_b)
    _, ka, kb = np.intersect1d(ua, ub, assume_unique=True, return_indices=True)
    if len(ka) == 0:
        return counts, degen
    na_k, nb_k = ca[ka], cb[kb]
    sa_k, sb_k = sa[ka], sb[kb]
    blk = na_k * nb_k
    total = int(blk.sum())
    blk_start = np.cumsum(blk) - blk
    owner = np.repeat(np.arange(len(ka)), blk)
    off = np.arange(total) - blk_start[owner]
    p = sa_k[owner] + off // nb_k[owner]
    q = sb_k[owner] + off % nb_k[owner]
    P0, P1, Q0, Q1 = a0[p], a1[p], b0[q], b1[q]
    o1 = _orient(P0, P1, Q0)
    o2 = _orient(P0, P1, Q1)
    o3 = _orient(Q0, Q1, P0)
    o4 = _orient(Q0, Q1, P1)
    deg = (o1 == 0.0) | (o2 == 0.0) | (o3 == 0.0) | (o4 == 0.0)
    cross = ~deg & ((o1 > 0.0) != (o2 > 0.0)) & ((o3 > 0.0) != (o4 > 0.0))
    np.add.at(counts, (tag_a[p[cross]], tag_b[q[cross]]), 1)
    np.add.at(degen, (tag_a[p[deg]], tag_b[q[deg]]), 1)
    return counts, degen
