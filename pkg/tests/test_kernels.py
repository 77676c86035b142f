import os
import subprocess
import sys

import numpy as np
import pytest
from oracles import brute_inf_to_one, segments_cross

from pbsurf import kernels
from pbsurf._pykernels import sign_vectors

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


@pytest.mark.parametrize("backend", BACKENDS)
def test_sign_norms_against_brute_force(backend):
    rng = np.random.default_rng(0)
    for n in (1, 2, 3, 4):
        B = rng.standard_normal((5, n, n))
        vals, arg = kernels.sign_norms(B, backend=backend)
        S = sign_vectors(n)
        for t in range(5):
            assert vals[t] == pytest.approx(brute_inf_to_one(B[t].tolist()), rel=1e-14)
            a = S[arg[t]]
            assert np.abs(a @ B[t]).sum() == pytest.approx(vals[t], rel=1e-14)


@pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled kernels not built")
def test_backends_agree_bitwise():
    rng = np.random.default_rng(1)
    for n in (2, 3, 5, 8):
        B = rng.standard_normal((200, n, n))
        B = B - np.transpose(B, (0, 2, 1))
        v1, a1 = kernels.sign_norms(B, backend="python")
        v2, a2 = kernels.sign_norms(B, backend="cython")
        assert np.array_equal(v1, v2) and np.array_equal(a1, a2)
    seg_a, seg_b = _random_segments(rng, 400), _random_segments(rng, 400)
    r1 = kernels.count_crossings(seg_a, seg_b, 3, 3, backend="python")
    r2 = kernels.count_crossings(seg_a, seg_b, 3, 3, backend="cython")
    assert all(np.array_equal(x, y) for x, y in zip(r1, r2))


def _random_segments(rng, n, n_tri=20, grid=None):
    tri = rng.integers(0, n_tri, n)
    if grid:
        p0 = rng.integers(0, grid, (n, 2)) / grid
        p1 = rng.integers(0, grid, (n, 2)) / grid
    else:
        p0, p1 = rng.random((n, 2)), rng.random((n, 2))
    return tri, p0, p1, rng.integers(0, 3, n)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("grid", [None, 4])
def test_count_crossings_against_exact_oracle(backend, grid):
    rng = np.random.default_rng(2)
    A, B = _random_segments(rng, 150, grid=grid), _random_segments(rng, 150, grid=grid)
    counts, degen = kernels.count_crossings(A, B, 3, 3, backend=backend)
    exp = np.zeros((3, 3), int)
    for i in range(150):
        for j in range(150):
            if A[0][i] != B[0][j]:
                continue
            if segments_cross(A[1][i], A[2][i], B[1][j], B[2][j]):
                exp[A[3][i], B[3][j]] += 1
    assert np.array_equal(counts, exp)
    if grid:
        assert degen.sum() > 0  # collinear and shared endpoints occur on a coarse lattice
    else:
        assert degen.sum() == 0


def test_count_crossings_empty_and_unknown_backend():
    e = (np.zeros(0, int), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, int))
    c, d = kernels.count_crossings(e, e, 2, 2)
    assert c.shape == (2, 2) and c.sum() == 0 and d.sum() == 0
    with pytest.raises(ValueError):
        kernels.sign_norms(np.zeros((1, 2, 2)), backend="fortran")


def test_pure_python_env_switch():
    env = dict(os.environ, PBSURF_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "from pbsurf import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
