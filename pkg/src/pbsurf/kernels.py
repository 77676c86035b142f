"""Backend selection for the hot kernels.

The compiled extension ``pbsurf._ckernels`` is used when it imports; set
``PBSURF_PURE_PYTHON=1`` to force the numpy fallback.  ``BACKEND`` names the
active one.
"""
import os

import numpy as np

from . import _pykernels

MAX_SIGN_N = 20


def _load_compiled():
    if os.environ.get("PBSURF_PURE_PYTHON", "").strip() not in ("", "0"):
        return None
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


_compiled = _load_compiled()
BACKEND = "cython" if _compiled is not None else "python"


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    if backend == "python":
        return _pykernels
    raise ValueError(f"unknown backend {backend!r}")


def sign_norms(B, backend=None):
    """Exact cube maximum of the bilinear form of each matrix in ``B``.

    ``B`` has shape (F, N, N).  Returns ``(values, arg)`` where ``arg`` is the
    index of the first maximizing sign vector (see
    :func:`pbsurf._pykernels.sign_vectors`).
    """
    B = np.ascontiguousarray(B, dtype=np.float64)
    if B.ndim != 3 or B.shape[1] != B.shape[2]:
        raise ValueError("expected an (F, N, N) array")
    if B.shape[1] > MAX_SIGN_N:
        raise ValueError(f"sign enumeration limited to N <= {MAX_SIGN_N}, got {B.shape[1]}")
    return _impl(backend).sign_norms(B)


def count_crossings(seg_a, seg_b, na=1, nb=1, backend=None):
    """Count proper crossings between two families of in-triangle segments.

    Each family is ``(tri, p0, p1, tag)``: triangle ids, endpoints in that
    triangle's barycentric chart, and an integer tag.  Only segments in the
    same triangle are compared.  Returns ``(counts, degenerate)`` as (na, nb)
    arrays indexed by tag pairs; a comparison with any zero orientation is
    counted as degenerate instead of being decided.
    """
    impl = _impl(backend)
    args = []
    for tri, p0, p1, tag in (seg_a, seg_b):
        tri = np.asarray(tri, dtype=np.int64)
        order = np.argsort(tri, kind="stable")
        args.extend(
            [
                np.ascontiguousarray(tri[order]),
                np.ascontiguousarray(np.asarray(p0, dtype=np.float64).reshape(-1, 2)[order]),
                np.ascontiguousarray(np.asarray(p1, dtype=np.float64).reshape(-1, 2)[order]),
                np.ascontiguousarray(np.broadcast_to(np.asarray(tag, dtype=np.int64), tri.shape)[order]),
            ]
        )
    return impl.count_crossings(*args, int(na), int(nb))
