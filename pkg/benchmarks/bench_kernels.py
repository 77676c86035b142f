"""Compare the compiled and numpy kernels on realistic inputs.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints the best wall time per kernel and backend and checks that both
backends return identical results.
"""
import argparse
import time

import numpy as np

from pbsurf import kernels
from pbsurf.cover import Cover, region_from_predicate
from pbsurf.levelsets import level_segments
from pbsurf.partition import build_bump_partition
from pbsurf.pbcalc import bracket_matrix
from pbsurf.surface import build_sphere_mesh


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def _inputs():
    m = build_sphere_mesh(5)
    c = Cover(
        [
            region_from_predicate(m, lambda p: p[:, 2] < 0.5),
            region_from_predicate(m, lambda p: (p[:, 2] > 0) & (p[:, 0] > -0.25)),
            region_from_predicate(m, lambda p: (p[:, 2] > 0) & (p[:, 0] < 0.25)),
        ]
    )
    p = build_bump_partition(c, 2, 2.0)
    B3 = bracket_matrix(p)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20000, 8, 8))
    B8 = A - np.swapaxes(A, 1, 2)
    f = m.field(m.vertices[:, 2]).tri_values()
    g = m.field(m.vertices[:, 0]).tri_values()
    lv = -0.9 + 1.8 * (np.arange(100) + 0.5) / 100
    sa, _ = level_segments(f, lv)
    sb, _ = level_segments(g, lv)
    return {"B3": B3, "B8": B8, "sa": sa, "sb": sb}


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    data = _inputs()
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    cases = {
        "sign_norms N=3 (20480 tris)": lambda b: kernels.sign_norms(data["B3"], backend=b),
        "sign_norms N=8 (20000 mats)": lambda b: kernels.sign_norms(data["B8"], backend=b),
        "count_crossings 100x100 levels": lambda b: kernels.count_crossings(
            data["sa"].as_tuple(), data["sb"].as_tuple(), 100, 100, backend=b
        ),
    }
    print(f"{'kernel':34s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup  identical")
    for name, fn in cases.items():
        times, outs = [], []
        for b in backends:
            t, out = _best(lambda: fn(b), args.repeat)
            times.append(t)
            outs.append(out)
        same = all(all(np.array_equal(x, y) for x, y in zip(outs[0], o)) for o in outs[1:])
        speed = f"{times[0] / times[-1]:8.1f}x" if len(times) > 1 else "       -"
        print(f"{name:34s} " + " ".join(f"{t * 1e3:8.2f}ms" for t in times) + f"  {speed}  {same}")


if __name__ == "__main__":
    main()
