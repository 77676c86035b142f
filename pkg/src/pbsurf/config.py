"""Scenario files.

A scenario is an INI file (``configparser`` syntax) with the sections
``[scenario]``, ``[surface]``, ``[cover]``, ``[partition]``, ``[optimizer]``,
``[task]`` and ``[output]``; see the README for the full grammar.  Set
predicates and fields are arithmetic/boolean expressions in the vertex
coordinates, compiled through a small whitelist of ``ast`` nodes.
"""
from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field

import numpy as np

TASKS = ("kappa", "essential", "verify-thm14", "coarea", "minimize-pb", "lemma34", "thm14-averaging")
COVER_TASKS = frozenset(TASKS) - {"coarea"}


class ConfigError(ValueError):
    """Scenario parse or validation failure; message names the field."""


# ----------------------------------------------------------------------
# expressions

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "atan2": np.arctan2,
    "min": np.minimum,
    "max": np.maximum,
}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.true_divide,
    ast.Pow: np.power,
    ast.Mod: np.mod,
}
_CMPOPS = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
}


def _coord_names(topology):
    if topology == "sphere":
        return {"x1": 0, "x2": 1, "x3": 2, "x": 0, "y": 1, "z": 2}
    return {"x": 0, "y": 1, "x1": 0, "x2": 1}


@dataclass
class Expr:
    """Compiled expression over vertex positions."""

    source: str
    tree: ast.Expression
    where: str = ""

    def __call__(self, pos, mesh=None):
        topo = mesh.topology if mesh is not None else ("sphere" if pos.shape[1] == 3 else "torus")
        env = {k: pos[:, i] for k, i in _coord_names(topo).items() if i < pos.shape[1]}
        env["pi"] = math.pi
        try:
            with np.errstate(all="ignore"):
                out = _Eval(env, mesh, self.where).visit(self.tree.body)
        except ConfigError:
            raise
        except Exception as e:  # numerical or shape trouble inside user input
            raise ConfigError(f"{self.where}: cannot evaluate {self.source!r}: {e}") from None
        return np.broadcast_to(out, (len(pos),)).copy()

    def defining_field(self):
        """(field Expr, threshold) when the expression is ``E > c`` / ``E < c``."""
        body = self.tree.body
        if not (isinstance(body, ast.Compare) and len(body.ops) == 1):
            return None
        op, lhs, rhs = body.ops[0], body.left, body.comparators[0]
        c = _const(rhs)
        if c is None:
            return None
        if isinstance(op, (ast.Gt, ast.GtE)):
            tree = ast.Expression(lhs)
        elif isinstance(op, (ast.Lt, ast.LtE)):
            tree = ast.Expression(ast.UnaryOp(ast.USub(), lhs))
            c = -c
        else:
            return None
        return Expr(ast.unparse(tree.body), tree, self.where), c


def _const(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return float(node.value)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _const(node.operand)
        if v is not None:
            return -v if isinstance(node.op, ast.USub) else v
    return None


class _Eval(ast.NodeVisitor):
    def __init__(self, env, mesh, where):
        self.env, self.mesh, self.where = env, mesh, where

    def fail(self, msg):
        raise ConfigError(f"{self.where}: {msg}")

    def generic_visit(self, node):
        self.fail(f"unsupported syntax {type(node).__name__}")

    def visit_Constant(self, n):
        if isinstance(n.value, bool) or not isinstance(n.value, (int, float)):
            self.fail(f"unsupported constant {n.value!r}")
        return float(n.value)

    def visit_Name(self, n):
        if n.id not in self.env:
            self.fail(f"unknown name {n.id!r} (allowed: {', '.join(sorted(self.env))})")
        return self.env[n.id]

    def visit_UnaryOp(self, n):
        v = self.visit(n.operand)
        if isinstance(n.op, ast.USub):
            return -v
        if isinstance(n.op, ast.UAdd):
            return v
        if isinstance(n.op, ast.Not):
            return ~np.asarray(v, dtype=bool)
        self.fail("unsupported unary operator")

    def visit_BinOp(self, n):
        fn = _BINOPS.get(type(n.op))
        if fn is None:
            self.fail("unsupported binary operator")
        return fn(self.visit(n.left), self.visit(n.right))

    def visit_BoolOp(self, n):
        vals = [np.asarray(self.visit(v), dtype=bool) for v in n.values]
        fn = np.logical_and if isinstance(n.op, ast.And) else np.logical_or
        out = vals[0]
        for v in vals[1:]:
            out = fn(out, v)
        return out

    def visit_Compare(self, n):
        left = self.visit(n.left)
        out = True
        for op, comp in zip(n.ops, n.comparators):
            fn = _CMPOPS.get(type(op))
            if fn is None:
                self.fail("only <, <=, >, >= comparisons are allowed")
            right = self.visit(comp)
            out = np.logical_and(out, fn(left, right))
            left = right
        return out

    def visit_Call(self, n):
        if not isinstance(n.func, ast.Name) or n.keywords:
            self.fail("unsupported call")
        name = n.func.id
        args = [self.visit(a) for a in n.args]
        if name == "rect":
            return self._rect(*args) if len(args) == 4 else self.fail("rect takes 4 arguments")
        if name == "cap":
            return self._cap(*args) if len(args) == 4 else self.fail("cap takes 4 arguments")
        fn = _FUNCS.get(name)
        if fn is None:
            self.fail(f"unknown function {name!r}")
        return fn(*args)

    def _rect(self, a, b, c, d):
        """Open rectangle (a, b) x (c, d) on the torus, read modulo the period."""
        if self.mesh is None or self.mesh.topology != "torus":
            self.fail("rect() is only defined on the torus")
        Lx, Ly = self.mesh.period
        x = np.mod(self.env["x"] - a, Lx)
        y = np.mod(self.env["y"] - c, Ly)
        return (x > 0) & (x < b - a) & (y > 0) & (y < d - c)

    def _cap(self, a, b, c, h):
        """{p : <p/|p|, u> > h} for the unit vector u along (a, b, c)."""
        if self.mesh is None or self.mesh.topology != "sphere":
            self.fail("cap() is only defined on the sphere")
        u = np.array([a, b, c], dtype=float)
        nu = np.linalg.norm(u)
        if nu == 0:
            self.fail("cap() axis must be nonzero")
        p = np.stack([self.env["x1"], self.env["x2"], self.env["x3"]], axis=1)
        return (p / np.linalg.norm(p, axis=1, keepdims=True)) @ (u / nu) > h


def compile_expr(src: str, where: str = "") -> Expr:
    try:
        tree = ast.parse(src.strip(), mode="eval")
    except SyntaxError as e:
        raise ConfigError(f"{where}: syntax error in {src!r}: {e.msg}") from None
    return Expr(src.strip(), tree, where)


# ----------------------------------------------------------------------
# scenario


@dataclass
class Scenario:
    path: str
    seed: int
    surface: dict
    cover: list = field(default_factory=list)  # [(name, Expr)]
    cover_mode: str = "strict"
    partition: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    task: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    config_task: str = None

    def echo(self):
        return {
            "path": self.path,
            "seed": self.seed,
            "surface": self.surface,
            "cover": {"mode": self.cover_mode, "sets": {n: e.source for n, e in self.cover}},
            "partition": self.partition,
            "optimizer": self.optimizer,
            "task": self.task,
        }


def _get(sec, key, conv, default=None, required=False, where=None):
    where = where or sec.name
    if key not in sec:
        if required:
            raise ConfigError(f"[{where}] missing required field {key!r}")
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"[{where}] field {key!r}: cannot read {raw!r} as {conv.__name__}") from None


def _floats(raw):
    vals = [float(x) for x in raw.replace(",", " ").split()]
    if not vals:
        raise ValueError(raw)
    return tuple(vals)


def _ints(raw):
    return tuple(int(x) for x in raw.replace(",", " ").split())


def parse_scenario(path, task=None) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # set names are case sensitive
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None

    sc = cp["scenario"] if cp.has_section("scenario") else cp[cp.default_section]
    config_task = sc.get("task", fallback=None)
    task = task or config_task
    if task is None:
        raise ConfigError("[scenario] missing required field 'task' (or give it on the command line)")
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {', '.join(TASKS)}")
    seed = _get(sc, "seed", int, 0, where="scenario") if cp.has_section("scenario") else 0

    if not cp.has_section("surface"):
        raise ConfigError("missing required section [surface]")
    s = cp["surface"]
    surface = {}
    if "mesh" in s:
        surface["mesh"] = s["mesh"].strip()
    else:
        kind = _get(s, "type", str, required=True)
        if kind == "sphere":
            surface.update(
                type="sphere",
                subdivision=_get(s, "subdivision", int, required=True),
                radius=_get(s, "radius", float, 1.0),
            )
        elif kind == "torus":
            surface.update(
                type="torus",
                nx=_get(s, "nx", int, required=True),
                ny=_get(s, "ny", int, required=True),
                Lx=_get(s, "Lx", float, 1.0),
                Ly=_get(s, "Ly", float, 1.0),
            )
        else:
            raise ConfigError(f"[surface] field 'type': expected sphere or torus, got {kind!r}")

    cover, mode = [], "strict"
    if cp.has_section("cover"):
        c = cp["cover"]
        mode = _get(c, "mode", str, "strict")
        if mode not in ("strict", "majority"):
            raise ConfigError(f"[cover] field 'mode': expected strict or majority, got {mode!r}")
        names = _get(c, "sets", lambda r: [x.strip() for x in r.split(",") if x.strip()], required=True)
        if not names:
            raise ConfigError("[cover] field 'sets' lists no sets")
        for n in names:
            if n not in c:
                raise ConfigError(f"[cover] missing required field {n!r} (listed in 'sets')")
            cover.append((n, compile_expr(c[n], f"[cover] {n}")))
    elif task in COVER_TASKS:
        raise ConfigError(f"missing required section [cover] for task {task!r}")

    def opt(section, spec):
        out = {}
        sec = cp[section] if cp.has_section(section) else {}
        for key, (conv, default) in spec.items():
            if sec and key in sec:
                out[key] = _get(sec, key, conv, where=section)
            elif default is not None:
                out[key] = default
        if sec:
            unknown = sorted(set(sec) - set(spec) - set(cp.defaults()))
            if unknown:
                raise ConfigError(f"[{section}] unknown field(s): {', '.join(unknown)}")
        return out

    partition = opt("partition", {"margin": (int, 2), "sharpness": (float, 2.0)})
    optimizer = opt(
        "optimizer",
        {
            "iterations": (int, 200),
            "restarts": (int, 3),
            "eta0": (float, 0.05),
            "noise": (float, 0.5),
            "tol": (float, 1e-12),
        },
    )
    tspec = {
        "tolerance": (float, None),
        "optimize": (_bool, None),
        "f": (str, None),
        "g": (str, None),
        "omega": (_floats, None),
        "grid": (_ints, None),
        "L": (int, None),
        "n_samples": (int, None),
        "n_perm_samples": (int, None),
        "n_pairs": (int, None),
        "pb_tolerance": (float, None),
    }
    tparams = opt("task", tspec)
    output = opt(
        "output",
        {"report": (str, "report.json"), "partition_csv": (str, None), "svg": (str, None), "mesh": (str, None)},
    )
    return Scenario(
        path=str(path),
        seed=seed,
        surface=surface,
        cover=cover,
        cover_mode=mode,
        partition=partition,
        optimizer=optimizer,
        task={"name": task, **tparams},
        output=output,
        config_task=config_task,
    )


def _bool(raw):
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


_bool.__name__ = "boolean"
_floats.__name__ = "list of reals"
_ints.__name__ = "list of integers"
