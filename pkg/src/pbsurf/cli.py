"""``pbsurf`` command line: run one task of a scenario file and write a report.

Exit status: 0 when every asserted check passes, 2 when the task's
hypotheses are not met (inconclusive), 1 on errors or failed checks.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__, kernels
from .config import TASKS, ConfigError, compile_expr, parse_scenario
from .cover import (
    Cover,
    CoverError,
    essential_sets,
    is_cover,
    is_topological_disc,
    kappa,
    private_triangles,
    region_from_predicate,
    smallest_subcover,
)
from .levelsets import coarea_sides, level_curve, regularize_level
from .partition import (
    ShrunkenCoverError,
    build_bump_partition,
    save_partition_csv,
    validate_partition,
)
from .pbcalc import PbOptions, l1_bracket_sum, lemma21_ratio, max_bracket_sum, minimize_pb
from .permcurves import (
    IntervalGrid,
    _draw_pair,
    averaging_experiment,
    gamma_curves,
    lemma34_check,
)
from .rng import child_rng
from .surface import MeshError, ScalarField, build_sphere_mesh, build_torus_mesh, load_mesh, save_mesh
from .svg import emit_svg

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2

ANCHORS = {
    "thm14": "finite disc cover with kappa >= 3: sum_ij int_M |{f_i, f_j}| omega >= 1",
    "kappa_lt3": "kappa < 3: pb = 0, realized by a two-set partition {f, 1 - f}",
    "ess_l1": "sum_ij int_M |{f_i, f_j}| omega >= |J| (J = essential sets)",
    "ess_max": "max_M sum_ij |{f_i, f_j}| >= 1 / min over J of Area(U)",
    "ratio": "nu_c / max_M sum_ij |{f_i, f_j}| lies in (0, 1]",
    "coarea": "int over Phi^-1(Omega) of |{f, g}| omega = int_Omega K(s, t) ds dt",
    "crossings": "#(union of boundary crossings of two L-covers) >= (L + 1 - |I|)^2",
    "perm_pair": "#(Gamma_alpha n Gamma'_beta) >= 1 for every permutation pair",
    "avg_upper": "E[#crossings] / L^2 = sum_ij int_M |{f_i, f_j}| omega (coarea average)",
    "avg_lower": "E[#crossings] / L^2 >= (L + 1 - |I|)^2 / L^2",
    "partition": "f_i >= 0, sum_i f_i = 1, supp f_i inside U_i",
}


def _check(name, anchor, passed, value=None, threshold=None, relation=None):
    return {
        "name": name,
        "anchor": ANCHORS[anchor],
        "passed": bool(passed),
        "value": value,
        "threshold": threshold,
        "relation": relation,
    }


# ----------------------------------------------------------------------
# pipeline pieces


def build_mesh(sc):
    s = sc.surface
    if "mesh" in s:
        path = s["mesh"]
        if not os.path.isabs(path):
            path = os.path.join(os.path.dirname(os.path.abspath(sc.path)), path)
        return load_mesh(path)
    if s["type"] == "sphere":
        return build_sphere_mesh(s["subdivision"], s["radius"])
    return build_torus_mesh(s["nx"], s["ny"], s["Lx"], s["Ly"])


def build_cover(sc, mesh) -> Cover:
    regions, names, fields, thresholds = [], [], [], []
    pos = mesh.vertices
    for name, expr in sc.cover:
        mask = expr(pos, mesh)
        if mask.dtype != bool:
            raise ConfigError(f"[cover] {name}: expression must be a condition, e.g. 'x3 < 0.5'")
        regions.append(region_from_predicate(mesh, lambda _p, m=mask: m, mode=sc.cover_mode))
        names.append(name)
        df = expr.defining_field()
        if df is None:
            fields.append(None)
            thresholds.append(None)
        else:
            fexpr, c = df
            fields.append(ScalarField(mesh, fexpr(pos, mesh)))
            thresholds.append(c)
    return Cover(regions, names, fields, thresholds)


def _cover_summary(c):
    ok = is_cover(c)
    out = {
        "names": list(c.names),
        "n_sets": len(c),
        "is_cover": ok,
        "areas": [r.area for r in c.regions],
        "discs": [bool(r) and is_topological_disc(r) for r in c.regions],
    }
    if ok:
        w = smallest_subcover(c)
        out.update(kappa=len(w), smallest_subcover=[c.names[i] for i in w])
    return out


def _need_cover(c):
    if not is_cover(c):
        raise CoverError(f"the sets do not cover the surface ({len(c.uncovered())} triangles uncovered)")


def _partition_block(p):
    rep = validate_partition(p)
    return rep, {"n_fields": p.N, **rep.as_dict()}


def _ratio_check(p):
    r = lemma21_ratio(p)
    block = {"nu_c": r.nu_c, "max_sum": r.max_sum, "ratio": r.ratio}
    checks = []
    if r.ratio is not None:
        checks.append(_check("ratio_in_(0,1]", "ratio", 0 < r.ratio <= 1 + 1e-12, r.ratio, [0, 1], "in"))
    return block, checks


# ----------------------------------------------------------------------
# tasks; each returns (result, checks, inconclusive_reason, artifacts)


def task_kappa(sc, mesh, side):
    c = build_cover(sc, mesh)
    _need_cover(c)
    side["cover"] = c
    return {"cover": _cover_summary(c)}, [], None


def task_essential(sc, mesh, side):
    c = build_cover(sc, mesh)
    _need_cover(c)
    side["cover"] = c
    J = essential_sets(c)
    wit = {i: private_triangles(c, i) for i in J}
    res = {
        "cover": _cover_summary(c),
        "essential": [c.names[i] for i in J],
        "witness_triangles": {c.names[i]: int(wit[i][0]) for i in J},
        "witness_counts": {c.names[i]: int(len(wit[i])) for i in J},
    }
    if not J:
        return res, [], "no essential sets: both bounds are vacuous"
    tol = sc.task.get("tolerance", 0.05)
    p = build_bump_partition(c, **sc.partition)
    side["partition"] = p
    rep, pblock = _partition_block(p)
    l1, ms = l1_bracket_sum(p), max_bracket_sum(p)
    min_area = min(c.regions[i].area for i in J)
    res.update(
        partition=pblock,
        l1_bracket_sum=l1,
        max_bracket_sum=ms,
        min_essential_area=min_area,
        tolerance=tol,
    )
    checks = [
        _check("partition_valid", "partition", rep.ok(), None, 1e-9, "<="),
        _check("l1_vs_essential_count", "ess_l1", l1 >= (1 - tol) * len(J), l1, (1 - tol) * len(J), ">="),
        _check("max_sum_vs_min_area", "ess_max", ms >= (1 - tol) / min_area, ms, (1 - tol) / min_area, ">="),
    ]
    return res, checks, None


def _hypotheses(c):
    ok = is_cover(c)
    reasons = []
    if not ok:
        reasons.append("not a cover")
        return reasons, {}
    k = kappa(c)
    discs = [bool(r) and is_topological_disc(r) for r in c.regions]
    if k < 3:
        reasons.append(f"kappa = {k} < 3")
    if not all(discs):
        reasons.append("not every set is a topological disc: " + ", ".join(n for n, d in zip(c.names, discs) if not d))
    return reasons, {"kappa": k, "discs": discs}


def _opts(sc):
    o = dict(sc.optimizer)
    return PbOptions(seed=sc.seed, margin=sc.partition["margin"], sharpness=sc.partition["sharpness"], **o)


def task_verify_thm14(sc, mesh, side):
    c = build_cover(sc, mesh)
    _need_cover(c)
    side["cover"] = c
    reasons, hyp = _hypotheses(c)
    res = {"cover": _cover_summary(c), "hypotheses": hyp}
    if reasons:
        return res, [], "; ".join(reasons)
    tol = sc.task.get("tolerance", 0.05)
    if sc.task.get("optimize"):
        est = minimize_pb(c, _opts(sc))
        p = est.partition
        res["pb_estimate"] = est.as_dict()
    else:
        p = build_bump_partition(c, **sc.partition)
    side["partition"] = p
    rep, pblock = _partition_block(p)
    l1 = l1_bracket_sum(p)
    ratio, rchecks = _ratio_check(p)
    res.update(partition=pblock, l1_bracket_sum=l1, tolerance=tol, ratio=ratio)
    checks = [
        _check("partition_valid", "partition", rep.ok(), None, 1e-9, "<="),
        _check("l1_floor", "thm14", l1 >= 1 - tol, l1, 1 - tol, ">="),
    ] + rchecks
    return res, checks, None


def task_minimize_pb(sc, mesh, side):
    c = build_cover(sc, mesh)
    _need_cover(c)
    side["cover"] = c
    t0 = time.perf_counter()
    est = minimize_pb(c, _opts(sc))
    side["optimizer_seconds"] = time.perf_counter() - t0
    p = est.partition
    side["partition"] = p
    rep, pblock = _partition_block(p)
    trace = est.trace
    res = {"cover": _cover_summary(c), "pb_estimate": est.as_dict(), "partition": pblock}
    checks = [
        _check("partition_valid", "partition", rep.ok(), None, 1e-9, "<="),
    ]
    monotone = all(b <= a for a, b in zip(trace, trace[1:]))
    res["pb_estimate"]["trace_monotone"] = monotone
    if est.kappa < 3:
        tol = sc.task.get("pb_tolerance", 1e-9)
        checks.append(_check("pb_zero", "kappa_lt3", est.nu_c <= tol, est.nu_c, tol, "<="))
        return res, checks, None
    reasons, hyp = _hypotheses(c)
    res["hypotheses"] = hyp
    if reasons:
        return res, checks, "; ".join(reasons)
    tol = sc.task.get("tolerance", 0.05)
    l1 = l1_bracket_sum(p)
    res["l1_bracket_sum"] = l1
    checks += [
        _check("pb_positive", "thm14", est.nu_c > 0, est.nu_c, 0.0, ">"),
        _check("l1_floor", "thm14", l1 >= 1 - tol, l1, 1 - tol, ">="),
    ]
    return res, checks, None


def task_coarea(sc, mesh, side):
    t = sc.task
    topo = mesh.topology
    f_src = t.get("f") or ("x3" if topo == "sphere" else "sin(2*pi*x)")
    g_src = t.get("g") or ("x1" if topo == "sphere" else "sin(2*pi*y)")
    omega = t.get("omega") or (-0.9, 0.9, -0.9, 0.9)
    grid = t.get("grid") or (100, 100)
    if len(omega) != 4:
        raise ConfigError("[task] field 'omega': expected four numbers s0, s1, t0, t1")
    if len(grid) != 2:
        raise ConfigError("[task] field 'grid': expected two integers ns, nt")
    fv = compile_expr(f_src, "[task] f")(mesh.vertices, mesh)
    gv = compile_expr(g_src, "[task] g")(mesh.vertices, mesh)
    f, g = ScalarField(mesh, fv.astype(float)), ScalarField(mesh, gv.astype(float))
    rep = coarea_sides(f, g, omega, grid)
    tol = t.get("tolerance", 0.02)
    s_mid = regularize_level(f.values, 0.5 * (omega[0] + omega[1]))
    t_mid = regularize_level(g.values, 0.5 * (omega[2] + omega[3]))
    side["curves"] = [level_curve(f, s_mid), level_curve(g, t_mid)]
    res = {"f": f_src, "g": g_src, "coarea": rep.as_dict(), "tolerance": tol}
    checks = [
        _check("sides_agree", "coarea", rep.rel_diff <= tol, rep.rel_diff, tol, "<="),
        _check("skipped_measure", "coarea", rep.skipped_fraction < 0.01, rep.skipped_fraction, 0.01, "<"),
    ]
    return res, checks, None


def _partition_for_experiment(sc, mesh, side):
    c = build_cover(sc, mesh)
    _need_cover(c)
    side["cover"] = c
    if sc.task.get("optimize"):
        p = minimize_pb(c, _opts(sc)).partition
    else:
        p = build_bump_partition(c, **sc.partition)
    side["partition"] = p
    return c, p


def task_lemma34(sc, mesh, side):
    c, p = _partition_for_experiment(sc, mesh, side)
    L = sc.task.get("L", 8)
    rep = lemma34_check(
        p, L, sc.seed, sc.task.get("n_perm_samples", 20), sc.task.get("n_pairs", 1)
    )
    res = {"cover": _cover_summary(c), "lemma34": rep}
    if rep["status"] == "inconclusive":
        return res, [], "; ".join(rep["reasons"])
    checks = []
    for k, pair in enumerate(rep["pairs"]):
        checks.append(
            _check(f"crossings_pair{k}", "crossings", pair["total_ok"], pair["total_crossings"], pair["bound"], ">=")
        )
        checks.append(
            _check(f"perm_pairs_pair{k}", "perm_pair", pair["perm_each_at_least_one"], pair["perm_min"], 1, ">=")
        )
    if sc.output.get("svg"):
        grid = IntervalGrid.for_partition(p, L)
        _, _, cs, ct, _, _ = _draw_pair(p, grid, sc.seed, "lemma34", 0)
        rng = child_rng(sc.seed, "lemma34/perm", 0)
        a, b = rng.permutation(len(cs)), rng.permutation(len(ct))
        side["curves"] = [gamma_curves(cs, a), gamma_curves(ct, b)]
    return res, checks, None


def task_averaging(sc, mesh, side):
    c, p = _partition_for_experiment(sc, mesh, side)
    L = sc.task.get("L", 8)
    rep = averaging_experiment(p, L, sc.task.get("n_samples", 200), sc.seed)
    res = {"cover": _cover_summary(c), "averaging": rep}
    checks = [
        _check(
            "implied_below_l1", "avg_upper", rep["upper_ok"], rep["implied_lower_bound"],
            rep["l1_bracket_sum"] + 3 * rep["sigma_mc"], "<=",
        )
    ]
    if not rep["bound_applies"]:
        return res, checks, f"kappa = {rep['kappa']} < 3: the lower bound does not apply"
    checks += [
        _check(
            "implied_above_bound", "avg_lower", rep["lower_ok"], rep["implied_lower_bound"],
            rep["bound"] - 3 * rep["sigma_mc"], ">=",
        ),
        _check("every_sample_count", "crossings", rep["per_sample_ok"], rep["min_count"], rep["count_bound"], ">="),
    ]
    return res, checks, None


RUNNERS = {
    "kappa": task_kappa,
    "essential": task_essential,
    "verify-thm14": task_verify_thm14,
    "coarea": task_coarea,
    "minimize-pb": task_minimize_pb,
    "lemma34": task_lemma34,
    "thm14-averaging": task_averaging,
}


# ----------------------------------------------------------------------


def _jsonable(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def dumps_report(report) -> str:
    return json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n"


def resolve_config(path):
    """A path on disk, or the name of a bundled scenario."""
    if os.path.exists(path):
        return path
    bundled = resources.files("pbsurf") / "scenarios" / os.path.basename(path)
    if bundled.is_file():
        return str(bundled)
    return path


def run_scenario(config, task=None, out_dir=None, seed=None, coarea_overrides=None):
    """Execute one scenario; returns (report, exit_code).  Writes outputs when
    ``out_dir`` is given."""
    t0 = time.perf_counter()
    sc = parse_scenario(resolve_config(config), task)
    if seed is not None:
        sc.seed = int(seed)
    for k, v in (coarea_overrides or {}).items():
        if v is None:
            continue
        if k == "subdivision":
            if sc.surface.get("type") != "sphere":
                raise ConfigError("--subdivision applies to sphere surfaces only")
            sc.surface["subdivision"] = v
        else:
            sc.task[k] = v
    mesh = build_mesh(sc)
    side = {}
    result, checks, inconclusive = RUNNERS[sc.task["name"]](sc, mesh, side)
    if any(not c["passed"] for c in checks):
        status, code = "fail", EXIT_FAIL
    elif inconclusive:
        status, code = "inconclusive", EXIT_INCONCLUSIVE
    else:
        status, code = "pass", EXIT_OK
    report = {
        "tool": {"name": "pbsurf", "version": __version__, "kernel_backend": kernels.BACKEND},
        "scenario": sc.echo(),
        "task": sc.task["name"],
        "mesh": {
            "topology": mesh.topology,
            "vertices": mesh.n_vertices,
            "triangles": mesh.n_triangles,
            "area": mesh.total_area,
        },
        "result": result,
        "checks": checks,
        "summary": {
            "status": status,
            "passed": sum(c["passed"] for c in checks),
            "failed": sum(not c["passed"] for c in checks),
            "inconclusive_reason": inconclusive,
        },
        "timing": {"wall_clock_seconds": time.perf_counter() - t0},
    }
    if "pb_estimate" in result:
        report["pb_estimate"] = result["pb_estimate"]
    if out_dir is not None:
        _write_outputs(sc, mesh, report, side, out_dir)
    return report, code


def _write_outputs(sc, mesh, report, side, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    o = sc.output
    written = {"report": os.path.join(out_dir, o["report"])}
    if o.get("partition_csv") and "partition" in side:
        written["partition_csv"] = os.path.join(out_dir, o["partition_csv"])
        save_partition_csv(side["partition"], written["partition_csv"])
    if o.get("svg"):
        written["svg"] = os.path.join(out_dir, o["svg"])
        regions = side["cover"].regions if "cover" in side else []
        emit_svg(side.get("curves", []), regions, written["svg"], mesh=mesh)
    if o.get("mesh"):
        written["mesh"] = os.path.join(out_dir, o["mesh"])
        save_mesh(mesh, written["mesh"])
    report["outputs"] = {k: os.path.basename(v) for k, v in written.items()}
    with open(written["report"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_report(report))


def _parse_pair(kind, n):
    def conv(raw):
        vals = [kind(x) for x in raw.replace(",", " ").split()]
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} values, got {raw!r}")
        return tuple(vals)

    return conv


def make_parser():
    ap = argparse.ArgumentParser(prog="pbsurf", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", required=True, help="scenario file (or the name of a bundled scenario)")
    ap.add_argument("--out", default="pbsurf-out", help="output directory (default: pbsurf-out)")
    ap.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    ap.add_argument("--quiet", action="store_true", help="print nothing on success")
    g = ap.add_argument_group("coarea fixtures")
    g.add_argument("--f", dest="f", default=None, help="first field expression")
    g.add_argument("--g", dest="g", default=None, help="second field expression")
    g.add_argument("--omega", type=_parse_pair(float, 4), default=None, help="s0,s1,t0,t1")
    g.add_argument("--grid", type=_parse_pair(int, 2), default=None, help="ns,nt")
    g.add_argument("--subdivision", type=int, default=None, help="sphere subdivision level")
    ap.add_argument("--version", action="version", version=f"pbsurf {__version__}")
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    over = {"f": args.f, "g": args.g, "omega": args.omega, "grid": args.grid, "subdivision": args.subdivision}
    try:
        report, code = run_scenario(args.config, args.task, args.out, args.seed, over)
    except (ConfigError, CoverError, ShrunkenCoverError, MeshError, ValueError, OSError) as e:
        print(f"pbsurf: error: {e}", file=sys.stderr)
        return EXIT_FAIL
    if not args.quiet or code != EXIT_OK:
        for c in report["checks"]:
            mark = "PASS" if c["passed"] else "FAIL"
            print(f"{mark} {c['name']}: {c['value']} {c['relation'] or ''} {c['threshold']}  [{c['anchor']}]")
        s = report["summary"]
        extra = f" ({s['inconclusive_reason']})" if s["inconclusive_reason"] else ""
        print(f"{report['task']}: {s['status']}{extra} -> {os.path.join(args.out, report['outputs']['report'])}")
    return code


if __name__ == "__main__":
    sys.exit(main())
