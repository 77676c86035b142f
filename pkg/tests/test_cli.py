import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest
from conftest import torus_rect

from pbsurf.cli import EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_OK, dumps_report, main, run_scenario
from pbsurf.config import ConfigError, compile_expr, parse_scenario
from pbsurf.surface import build_sphere_mesh, build_torus_mesh


def write(tmp_path, text, name="s.cfg"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def _strip_clock(text):
    d = json.loads(text)
    d["timing"].pop("wall_clock_seconds")
    return dumps_report(d)


def test_example15_bundled(tmp_path, capsys):
    code = main(["verify-thm14", "--config", "example15.cfg", "--out", str(tmp_path)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "verify-thm14: pass" in out
    rep = json.loads((tmp_path / "example15.json").read_text())
    assert rep["result"]["l1_bracket_sum"] >= 0.95
    assert all(c["anchor"] for c in rep["checks"])
    assert (tmp_path / "example15_partition.csv").exists()
    assert (tmp_path / "example15.svg").read_text().startswith("<?xml")


def test_kappa2_bundled(tmp_path):
    assert main(["minimize-pb", "--config", "kappa2.cfg", "--out", str(tmp_path), "--quiet"]) == EXIT_OK
    rep = json.loads((tmp_path / "kappa2.json").read_text())
    assert rep["pb_estimate"]["nu_c_upper"] <= 1e-9
    assert rep["pb_estimate"]["kappa"] == 2


@pytest.mark.parametrize("cfg,task", [("torus3.cfg", "verify-thm14"), ("coarea_sphere.cfg", "coarea")])
def test_other_bundled(tmp_path, cfg, task):
    assert main([task, "--config", cfg, "--out", str(tmp_path), "--quiet"]) == EXIT_OK


@pytest.mark.parametrize("task", ["kappa", "essential", "lemma34", "minimize-pb"])
def test_tasks_on_example(tmp_path, task):
    rep, code = run_scenario("example15.cfg", task, str(tmp_path))
    assert code == EXIT_OK, rep["checks"]
    assert rep["task"] == task


def test_inconclusive_exit(tmp_path):
    rep, code = run_scenario("kappa2.cfg", "lemma34", str(tmp_path))
    assert code == EXIT_INCONCLUSIVE
    assert "kappa" in rep["summary"]["inconclusive_reason"]


def test_determinism(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["lemma34", "--config", "example15.cfg", "--out", str(d), "--quiet", "--seed", "4"]) == 0
    ra, rb = ((d / "example15.json").read_text() for d in (a, b))
    assert _strip_clock(ra) == _strip_clock(rb)
    assert json.loads(ra)["scenario"]["seed"] == 4
    assert (a / "example15.svg").read_bytes() == (b / "example15.svg").read_bytes()
    assert (a / "example15_partition.csv").read_bytes() == (b / "example15_partition.csv").read_bytes()


def test_seed_changes_draws():
    r0, _ = run_scenario("example15.cfg", "lemma34", seed=0)
    r1, _ = run_scenario("example15.cfg", "lemma34", seed=1)
    assert r0["result"]["lemma34"]["pairs"] != r1["result"]["lemma34"]["pairs"]


BASE = """
[scenario]
task = kappa

[surface]
type = sphere
subdivision = 2

[cover]
sets = A, B
A = x3 > -0.3
B = x3 < 0.3
"""


def test_minimal_config(tmp_path):
    rep, code = run_scenario(write(tmp_path, BASE))
    assert code == EXIT_OK and rep["result"]["cover"]["kappa"] == 2


@pytest.mark.parametrize(
    "text,needle",
    [
        (BASE.replace("type = sphere\n", ""), "'type'"),
        (BASE.replace("B = x3 < 0.3\n", ""), "'B'"),
        (BASE.replace("subdivision = 2", "subdivision = two"), "'subdivision'"),
        (BASE + "\n[partition]\nmargins = 3\n", "margins"),
        (BASE.replace("x3 > -0.3", "__import__('os')"), "A"),
        (BASE.replace("x3 > -0.3", "x3 >"), "syntax"),
        ("[scenario\ntask = kappa\n", "line"),
    ],
)
def test_malformed_configs_exit_1(tmp_path, capsys, text, needle):
    path = write(tmp_path, text)
    assert main(["kappa", "--config", path, "--out", str(tmp_path)]) == EXIT_FAIL
    assert needle in capsys.readouterr().err


def test_task_required_without_cli_task(tmp_path):
    with pytest.raises(ConfigError, match="'task'"):
        parse_scenario(write(tmp_path, BASE.replace("task = kappa", "seed = 1")))


def test_unknown_task_in_config(tmp_path):
    with pytest.raises(ConfigError, match="frobnicate"):
        parse_scenario(write(tmp_path, BASE.replace("task = kappa", "task = frobnicate")))


def test_missing_config_file(tmp_path, capsys):
    assert main(["kappa", "--config", str(tmp_path / "nope.cfg"), "--out", str(tmp_path)]) == EXIT_FAIL
    assert "not found" in capsys.readouterr().err


def test_not_a_cover_is_an_error(tmp_path, capsys):
    text = BASE.replace("B = x3 < 0.3", "B = x3 < -0.5")
    assert main(["kappa", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == EXIT_FAIL


def test_coarea_overrides(tmp_path):
    rep, code = run_scenario(
        "coarea_sphere.cfg",
        out_dir=str(tmp_path),
        coarea_overrides={"f": "x2", "g": "x3", "grid": (20, 20), "subdivision": 3},
    )
    assert code == EXIT_OK
    assert rep["mesh"]["triangles"] == 1280
    assert rep["result"]["coarea"]["grid"] == [20, 20]
    with pytest.raises(ConfigError):
        run_scenario("coarea_torus.cfg", coarea_overrides={"subdivision": 3})


def test_cli_flags_parse(tmp_path):
    code = main(
        ["coarea", "--config", "coarea_sphere.cfg", "--out", str(tmp_path), "--quiet",
         "--subdivision", "3", "--grid", "20,20", "--omega=-0.5,0.5,-0.5,0.5"]
    )
    assert code == EXIT_OK
    rep = json.loads((tmp_path / "coarea_sphere.json").read_text())
    assert rep["result"]["coarea"]["omega"] == [-0.5, 0.5, -0.5, 0.5]


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "pbsurf.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("pbsurf ")


# ----------------------------------------------------------------------
# expression grammar


def test_expressions_on_sphere():
    m = build_sphere_mesh(1)
    V = m.vertices
    assert np.array_equal(compile_expr("x3 > 0 and x1 < 0.25")(V, m), (V[:, 2] > 0) & (V[:, 0] < 0.25))
    assert np.array_equal(compile_expr("not (z > 0) or x > 0.5")(V, m), ~(V[:, 2] > 0) | (V[:, 0] > 0.5))
    assert np.array_equal(compile_expr("-0.5 < x2 < 0.5")(V, m), (V[:, 1] > -0.5) & (V[:, 1] < 0.5))
    assert np.allclose(compile_expr("sqrt(x1**2 + x2**2) + atan2(x2, x1) * 0")(V, m), np.hypot(V[:, 0], V[:, 1]))
    cap = compile_expr("cap(0, 0, 1, 0.5)")(V, m)
    assert np.array_equal(cap, V[:, 2] > 0.5)
    assert np.allclose(compile_expr("pi")(V, m), np.pi)


def test_expressions_on_torus():
    m = build_torus_mesh(10, 10)
    V = m.vertices
    r = compile_expr("rect(0.7, 1.5, 0.7, 1.5)")(V, m)
    assert np.array_equal(r, torus_rect(0.7, 1.5, 0.7, 1.5)(V))
    assert r.any() and not r.all()
    # wrapped: the corner cell at the origin is inside
    assert r[np.flatnonzero((V[:, 0] == 0.0) & (V[:, 1] == 0.0))].all()
    assert np.allclose(compile_expr("sin(2*pi*x)")(V, m), np.sin(2 * np.pi * V[:, 0]))


@pytest.mark.parametrize(
    "src",
    ["__import__('os')", "x1.real", "[x1]", "x1 == 0", "foo(x1)", "lambda: 0", "'a'", "x4 > 0", "min(x1, y=2)"],
)
def test_rejected_expressions(src):
    m = build_sphere_mesh(0)
    with pytest.raises(ConfigError):
        compile_expr(src, "[cover] U")(m.vertices, m)


def test_wrong_surface_helpers():
    s, t = build_sphere_mesh(0), build_torus_mesh(4, 4)
    with pytest.raises(ConfigError):
        compile_expr("rect(0, 1, 0, 1)")(s.vertices, s)
    with pytest.raises(ConfigError):
        compile_expr("cap(0, 0, 1, 0)")(t.vertices, t)


def test_defining_field():
    e = compile_expr("x3 < 0.5")
    f, c = e.defining_field()
    m = build_sphere_mesh(1)
    assert c == -0.5 and np.allclose(f(m.vertices, m), -m.vertices[:, 2])
    assert compile_expr("x3 > 0 and x1 > 0").defining_field() is None
