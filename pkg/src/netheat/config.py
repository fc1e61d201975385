"""Flat ``key = value`` experiment configuration and initial-data expressions."""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    """Malformed or incomplete configuration."""


GRAPH_SOURCES = ("graph", "graph_file", "tree", "tree_file")

# required fields per experiment kind; "graph source" means one of GRAPH_SOURCES
REQUIRED = {
    "evolve": ("@graph", "f", "u0", "h", "dt", "T"),
    "compare": ("@graph", "f", "u0_lower", "u0_upper", "h", "dt", "T"),
    "monotone": ("@graph", "f", "q_lower", "q_upper", "h", "dt"),
    "stationary": ("@graph", "f", "u0", "h"),
    "dual": ("@graph", "f", "u0_lower", "u0_upper", "h", "dt", "T"),
    "barrier": ("beta_exp", "K", "theta", "c0", "R_n0", "tau"),
    "tree-reduce": ("@tree", "f", "u0", "h", "dt", "T"),
    "check-h2": ("@graph", "C", "theta", "beta_exp"),
    "check-order": ("@graph", "f", "u0", "h", "order"),
}
KINDS = tuple(REQUIRED)


@dataclass
class ExperimentConfig:
    kind: str
    values: dict
    base: Path = field(default_factory=Path.cwd)

    def has(self, key: str) -> bool:
        return key in self.values

    def str(self, key: str, default=None) -> str:
        if key in self.values:
            return self.values[key]
        if default is None:
            raise ConfigError(f"missing required field '{key}'")
        return default

    def float(self, key: str, default=None) -> float:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required field '{key}'")
            return float(default)
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigError(f"field '{key}' is not a number: {self.values[key]!r}") from None

    def int(self, key: str, default=None) -> int:
        x = self.float(key, default)
        if x != int(x):
            raise ConfigError(f"field '{key}' must be an integer")
        return int(x)

    def floats(self, key: str, default=None) -> list[float]:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required field '{key}'")
            return list(default)
        try:
            return [float(t) for t in self.values[key].replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"field '{key}' must be a list of numbers") from None

    def bool(self, key: str, default: bool = False) -> bool:
        if key not in self.values:
            return default
        v = self.values[key].lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"field '{key}' must be a boolean")

    def choice(self, key: str, options, default=None) -> str:
        v = self.str(key, default)
        if v not in options:
            raise ConfigError(f"field '{key}' must be one of {', '.join(options)}; got {v!r}")
        return v

    def path(self, key: str) -> Path:
        p = Path(self.str(key))
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise ConfigError(f"file for '{key}' not found: {p}")
        return p


def parse_config(text: str, base: Path | None = None) -> ExperimentConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) and check required fields."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate field '{key}'")
        values[key] = value
    if "kind" not in values:
        raise ConfigError("missing required field 'kind'")
    kind = values["kind"]
    if kind not in REQUIRED:
        raise ConfigError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    for req in REQUIRED[kind]:
        if req == "@graph":
            if not any(k in values for k in GRAPH_SOURCES):
                raise ConfigError(f"missing required field 'graph' (or one of "
                                  f"{', '.join(GRAPH_SOURCES[1:])})")
        elif req == "@tree":
            if not any(k in values for k in ("tree", "tree_file")):
                raise ConfigError("missing required field 'tree' (or 'tree_file')")
        elif req not in values:
            raise ConfigError(f"missing required field '{req}'")
    return ExperimentConfig(kind, values, base or Path.cwd())


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent)


_FUNCS = {
    "sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs,
    "max": np.maximum, "min": np.minimum, "pos": lambda a: np.maximum(a, 0.0),
}
_CONSTS = {"pi": math.pi}
_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply,
           ast.Div: np.divide, ast.Pow: np.power}


class Expression:
    """Arithmetic over ``rho`` (distance from the root) and ``x`` (edge coordinate).

    Operators ``+ - * / ^`` (``**`` also accepted), parentheses, numbers, ``pi``
    and the functions ``sin cos exp abs max min pos`` (``pos(a) = max(a, 0)``).
    """

    VARIABLES = ("rho", "x")

    def __init__(self, source: str):
        self.source = source
        try:
            tree = ast.parse(source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"bad expression {source!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name) and (node.id in _CONSTS or node.id in self.VARIABLES):
            return
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            self._check(node.left)
            self._check(node.right)
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
            return
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and not node.keywords):
            for a in node.args:
                self._check(a)
            return
        raise ConfigError(f"unsupported construct in expression {self.source!r}: "
                          f"{ast.dump(node)[:40]}")

    def uses(self, name: str) -> bool:
        return any(isinstance(n, ast.Name) and n.id == name for n in ast.walk(self._tree))

    def __call__(self, **env):
        return self._eval(self._tree, env)

    def _eval(self, node, env):
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            if node.id not in env:
                raise ConfigError(f"variable '{node.id}' is not available here")
            return env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](self._eval(node.left, env), self._eval(node.right, env))
        if isinstance(node, ast.UnaryOp):
            v = self._eval(node.operand, env)
            return -v if isinstance(node.op, ast.USub) else v
        return _FUNCS[node.func.id](*(self._eval(a, env) for a in node.args))
