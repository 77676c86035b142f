import numpy as np
import pytest

from pbsurf.cover import Cover, region_from_predicate
from pbsurf.partition import build_bump_partition
from pbsurf.surface import build_sphere_mesh, build_torus_mesh


def three_caps(mesh):
    """{x3 < 1/2} and the two halves of the northern hemisphere."""
    return Cover(
        [
            region_from_predicate(mesh, lambda p: p[:, 2] < 0.5),
            region_from_predicate(mesh, lambda p: (p[:, 2] > 0) & (p[:, 0] > -0.25)),
            region_from_predicate(mesh, lambda p: (p[:, 2] > 0) & (p[:, 0] < 0.25)),
        ],
        names=["U1", "U2", "U3"],
    )


def torus_rect(a, b, c, d, Lx=1.0, Ly=1.0):
    def pred(p):
        x = np.mod(p[:, 0] - a, Lx)
        y = np.mod(p[:, 1] - c, Ly)
        return (x > 0) & (x < b - a) & (y > 0) & (y < d - c)

    return pred


def three_rects(mesh):
    return Cover(
        [
            region_from_predicate(mesh, torus_rect(0.0, 0.8, 0.0, 0.8)),
            region_from_predicate(mesh, torus_rect(0.7, 1.5, 0.7, 1.5)),
            region_from_predicate(mesh, torus_rect(0.4, 1.15, 0.4, 1.15)),
        ],
        names=["R1", "R2", "R3"],
    )


def two_discs(mesh):
    return Cover(
        [
            region_from_predicate(mesh, lambda p: p[:, 2] > -0.3),
            region_from_predicate(mesh, lambda p: p[:, 2] < 0.3),
        ],
        names=["north", "south"],
    )


@pytest.fixture(scope="session")
def sphere5():
    return build_sphere_mesh(5)


@pytest.fixture(scope="session")
def sphere3():
    return build_sphere_mesh(3)


@pytest.fixture(scope="session")
def torus48():
    return build_torus_mesh(48, 48)


@pytest.fixture(scope="session")
def caps5(sphere5):
    return three_caps(sphere5)


@pytest.fixture(scope="session")
def caps5_partition(caps5):
    return build_bump_partition(caps5, 2, 2.0)


@pytest.fixture(scope="session")
def rects48(torus48):
    return three_rects(torus48)


_AVERAGING = {}


@pytest.fixture(scope="session")
def averaging_runs(caps5_partition):
    """Seed-0, 200-sample averaging runs on the three-cap partition, keyed by L
    and computed on first use."""
    from pbsurf.permcurves import averaging_experiment

    def get(L):
        if L not in _AVERAGING:
            _AVERAGING[L] = averaging_experiment(caps5_partition, L, n_samples=200, seed=0)
        return _AVERAGING[L]

    return get


# ----------------------------------------------------------------------
# acceptance summary: tests/test_acceptance.py records one line per criterion

ACCEPTANCE = {}
_SESSION_START = [None]
SUITE_BUDGET_SECONDS = 600.0


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} {detail}")


def pytest_sessionstart(session):
    import time

    _SESSION_START[0] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    import time

    if not ACCEPTANCE:
        return
    elapsed = time.perf_counter() - _SESSION_START[0]
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        if n == 7:
            ok = ok and elapsed < SUITE_BUDGET_SECONDS
            detail += f"; full session {elapsed:.0f} s (< {SUITE_BUDGET_SECONDS:.0f} s)"
        tr.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
