"""JSON scenario files: schema validation, expressions, and builders.

A scenario file looks like::

    {"schema_version": 1,
     "integrand": "quadrant",
     "grid": {"h": 0.0625, "shape": {"kind": "disc", "radius": 1.0}},
     "u0": "sgn(x1)",
     "measure": {"cell_density": "0", "atoms": [{"vertical_segment": [0, -1, 1], "density": 1.0}]},
     "exact": {"shapes": [...], "mu": [...], "nu": [...]},
     "solve": {"max_iters": 20000}}

Every section is optional except ``schema_version``. Unknown keys anywhere raise
ConfigError so that typos never pass silently.
"""
from __future__ import annotations

import ast
import copy
import json
import math
import operator
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError

SCHEMA_VERSION = 1

TOP_KEYS = {"schema_version", "name", "integrand", "grid", "u0", "measure", "exact", "solve",
            "seed", "constant", "direction"}
GRID_KEYS = {"h", "shape", "bitmap", "box", "origin"}
MEASURE_KEYS = {"cell_density", "atoms"}
ATOM_KEYS = {"edges", "m_plus", "m_minus", "circle", "vertical_segment", "density", "part"}
EXACT_KEYS = {"shapes", "mu", "nu"}


# ---------------------------------------------------------------------------
# expressions

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: np.power}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"abs": np.abs, "sgn": np.sign, "sqrt": np.sqrt, "min": np.minimum,
          "max": np.maximum, "pos": lambda a: np.maximum(a, 0.0)}
_NAMES = {"x1", "x2", "r", "pi"}


@dataclass(frozen=True)
class Expression:
    """Arithmetic in x1, x2 and r = |x| with abs, sgn, sqrt, min, max, pos; '^' is a power.

    ``|x|`` is accepted as a spelling of r.
    """

    source: str
    tree: ast.Expression = field(compare=False, repr=False)

    @classmethod
    def parse(cls, text) -> "Expression":
        if isinstance(text, (int, float)) and not isinstance(text, bool):
            text = repr(float(text))
        if not isinstance(text, str):
            raise ConfigError(f"expression must be a string or number, got {type(text).__name__}")
        try:
            # "^" becomes "**" so that it binds tighter than + and -
            tree = ast.parse(text.replace("|x|", "r").replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None
        for node in ast.walk(tree):
            _check_node(node, text)
        return cls(text, tree)

    def __call__(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, float))
        env = {"x1": pts[:, 0], "x2": pts[:, 1], "r": np.hypot(pts[:, 0], pts[:, 1]),
               "pi": math.pi}
        with np.errstate(divide="ignore", invalid="ignore"):
            out = _eval(self.tree.body, env)
        return np.broadcast_to(np.asarray(out, float), (len(pts),)).copy()


def _check_node(node, text):
    ok = (ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
          *_BINOPS, *_UNOPS)
    if not isinstance(node, ok):
        raise ConfigError(f"unsupported syntax {type(node).__name__} in {text!r}")
    if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
        raise ConfigError(f"only numeric constants are allowed in {text!r}")
    if isinstance(node, ast.Name) and node.id not in _NAMES and node.id not in _FUNCS:
        raise ConfigError(f"unknown name {node.id!r} in {text!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS or node.keywords:
            raise ConfigError(f"unsupported call in {text!r}")


def _eval(node, env):
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.UnaryOp):
        return _UNOPS[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    args = [_eval(a, env) for a in node.args]
    return _FUNCS[node.func.id](*args)


# ---------------------------------------------------------------------------
# scenario model


@dataclass
class Scenario:
    raw: dict
    name: str = "scenario"

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        validate(data)
        return cls(copy.deepcopy(data), data.get("name", "scenario"))

    @classmethod
    def load(cls, path) -> "Scenario":
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"scenario file not found: {p}")
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)

    def with_overrides(self, pairs) -> "Scenario":
        """Apply ``dotted.key=value`` strings; values are parsed as JSON when possible."""
        data = self.to_dict()
        for item in pairs or ():
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form key=value")
            key, val = item.split("=", 1)
            try:
                val = json.loads(val)
            except json.JSONDecodeError:
                pass
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"override {key!r} descends into a non-object")
            node[parts[-1]] = val
        return Scenario.from_dict(data)

    # builders -------------------------------------------------------------

    def integrand(self):
        from .integrand import by_name

        spec = self.raw.get("integrand", "isotropic")
        if isinstance(spec, dict):
            return by_name(spec["name"], spec.get("coefficients"))
        return by_name(spec)

    def domain(self, h: float | None = None):
        from .exactgeo.shapes import from_literal
        from .grid import GridDomain

        g = self.raw.get("grid")
        if g is None:
            raise ConfigError("scenario has no grid section")
        step = float(h if h is not None else g.get("h", 1.0))
        origin = tuple(g.get("origin", (0.0, 0.0)))
        if "shape" in g:
            return GridDomain.from_shape(from_literal(g["shape"]), step)
        if "bitmap" in g:
            return GridDomain.from_bitmap(g["bitmap"], step, origin)
        if "box" in g:
            nx, ny = g["box"]
            return GridDomain.box(int(nx), int(ny), step, origin)
        raise ConfigError("grid needs one of shape, bitmap or box")

    def datum(self, dom) -> np.ndarray:
        return Expression.parse(self.raw.get("u0", 0.0))(dom.boundary_edges.mid)

    def measure(self, dom):
        from .grid import DiscreteMeasure, circle_atoms, vertical_segment_atoms

        m = self.raw.get("measure", {})
        dens = Expression.parse(m.get("cell_density", 0.0))(dom.centers)
        edges, mp, mm = [np.zeros(0, np.int64)], [np.zeros(0)], [np.zeros(0)]
        for atom in m.get("atoms", []):
            if "edges" in atom:
                e = np.asarray(atom["edges"], np.int64)
                plus = np.broadcast_to(np.asarray(atom.get("m_plus", 0.0), float), e.shape)
                minus = np.broadcast_to(np.asarray(atom.get("m_minus", 0.0), float), e.shape)
            else:
                if "circle" in atom:
                    c = atom["circle"]
                    e, mass = circle_atoms(dom, tuple(c.get("center", (0.0, 0.0))), c["radius"],
                                           atom.get("density", 1.0))
                elif "vertical_segment" in atom:
                    x, y0, y1 = atom["vertical_segment"]
                    e, mass = vertical_segment_atoms(dom, x, y0, y1, atom.get("density", 1.0))
                else:
                    raise ConfigError("atom entry needs edges, circle or vertical_segment")
                part = atom.get("part", "both")
                if part not in ("plus", "minus", "both"):
                    raise ConfigError(f"atom part must be plus, minus or both, got {part!r}")
                plus = mass if part in ("plus", "both") else np.zeros_like(mass)
                minus = mass if part in ("minus", "both") else np.zeros_like(mass)
            edges.append(e)
            mp.append(plus)
            mm.append(minus)
        edges_all = np.concatenate(edges)
        if len(edges_all) and (edges_all.min() < 0 or edges_all.max() >= len(dom.interior_edges)):
            raise ConfigError("atom edge index out of range")
        return DiscreteMeasure(dens, edges_all, np.concatenate(mp), np.concatenate(mm))

    def exact(self):
        """(shapes, mu, nu) from the exact section."""
        from .exactgeo.measures import measure_from_literal
        from .exactgeo.shapes import from_literal

        ex = self.raw.get("exact", {})
        try:
            shapes = [from_literal(s) for s in ex.get("shapes", [])]
            mu = [measure_from_literal(m) for m in ex.get("mu", [])]
            nu = [measure_from_literal(m) for m in ex.get("nu", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad exact section: {exc}") from None
        return shapes, mu, nu

    def solve_config(self, **extra):
        from .solve import SolveConfig

        opts = dict(self.raw.get("solve", {}))
        if "seed" in self.raw:
            opts.setdefault("seed", self.raw["seed"])
        opts.update({k: v for k, v in extra.items() if v is not None})
        try:
            return SolveConfig(**opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad solve section: {exc}") from None


def _reject_unknown(section: dict, allowed: set, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    extra = sorted(set(section) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def validate(data: Any) -> None:
    from .solve import SolveConfig

    _reject_unknown(data, TOP_KEYS, "scenario")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    if "grid" in data:
        g = data["grid"]
        _reject_unknown(g, GRID_KEYS, "grid")
        if "h" in g and not (isinstance(g["h"], (int, float)) and g["h"] > 0):
            raise ConfigError("grid.h must be a positive number")
        if sum(k in g for k in ("shape", "bitmap", "box")) != 1:
            raise ConfigError("grid needs exactly one of shape, bitmap or box")
    if "u0" in data:
        Expression.parse(data["u0"])
    if "measure" in data:
        m = data["measure"]
        _reject_unknown(m, MEASURE_KEYS, "measure")
        if "cell_density" in m:
            Expression.parse(m["cell_density"])
        for i, atom in enumerate(m.get("atoms", [])):
            _reject_unknown(atom, ATOM_KEYS, f"measure.atoms[{i}]")
    if "exact" in data:
        _reject_unknown(data["exact"], EXACT_KEYS, "exact")
    if "solve" in data:
        allowed = {f.name for f in fields(SolveConfig)}
        _reject_unknown(data["solve"], allowed, "solve")
    if "direction" in data and data["direction"] not in ("forward", "mirrored"):
        raise ConfigError("direction must be forward or mirrored")
    if "constant" in data and not (isinstance(data["constant"], (int, float)) and data["constant"] >= 0):
        raise ConfigError("constant must be a nonnegative number")


def load_overrides(path) -> dict:
    """Flat JSON object of gallery parameter overrides."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"override file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError("override file must hold a JSON object")
    return data
