"""Interpolation expression language: a closed arithmetic DSL for
imputation functions.

Oracle-proposed methods are expression pairs over a fixed variable set
rather than arbitrary code, so they can be stored, replayed and compared
deterministically. Grammar (see docs/iel.md for the EBNF):

  expr    := term (("+" | "-") term)*
  term    := factor (("*" | "/") factor)*
  factor  := ("-" | "+") factor | power
  power   := atom ("**" factor)?
  atom    := NUMBER | NAME | NAME "(" expr ("," expr)* ")" | "(" expr ")"

Callable names: pow, sin, cos, tan, atan2, sqrt, min, max, clamp.
Free variables: u, lat0, lon0, lat1, lon1, dt_total, plus any declared
parameter names. The surface syntax is a strict subset of Python
expressions; parsing reuses the ``ast`` module with a node whitelist.
"""

from __future__ import annotations

import ast
import math
import operator

from .errors import EvaluationError, UnsupportedConstruct

#: Variables every expression may reference without declaring them.
BASE_VARIABLES = frozenset({"u", "lat0", "lon0", "lat1", "lon1", "dt_total"})


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(max(x, lo), hi)


FUNCTIONS: dict[str, tuple] = {
    "pow": (2, math.pow),
    "sin": (1, math.sin),
    "cos": (1, math.cos),
    "tan": (1, math.tan),
    "atan2": (2, math.atan2),
    "sqrt": (1, math.sqrt),
    "min": (2, min),
    "max": (2, max),
    "clamp": (3, _clamp),
}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: math.pow,
}

_UNARYOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}


class Expression:
    """A parsed, validated expression ready for repeated evaluation."""

    __slots__ = ("source", "_tree", "variables")

    def __init__(self, source: str, param_names: frozenset[str]):
        self.source = source
        try:
            tree = ast.parse(source, mode="eval")
        except SyntaxError as exc:
            raise UnsupportedConstruct(f"unparseable expression: {exc}") from exc
        allowed = BASE_VARIABLES | param_names
        self.variables = _validate(tree.body, allowed)
        self._tree = tree.body

    def evaluate(self, env: dict[str, float]) -> float:
        try:
            value = _eval(self._tree, env)
        except ZeroDivisionError as exc:
            raise EvaluationError(f"division by zero in {self.source!r}") from exc
        except (ValueError, OverflowError) as exc:
            raise EvaluationError(f"math error in {self.source!r}: {exc}") from exc
        if not math.isfinite(value):
            raise EvaluationError(f"non-finite result from {self.source!r}")
        return value


def _validate(node: ast.AST, allowed: frozenset[str]) -> set[str]:
    """Walk the tree rejecting anything outside the whitelist; return names used."""
    if isinstance(node, ast.Constant):
        if not isinstance(node.value, (int, float)) or isinstance(node.value, bool):
            raise UnsupportedConstruct(f"non-numeric literal {node.value!r}")
        return set()
    if isinstance(node, ast.Name):
        if node.id not in allowed:
            raise UnsupportedConstruct(f"unknown variable {node.id!r}")
        return {node.id}
    if isinstance(node, ast.BinOp):
        if type(node.op) not in _BINOPS:
            raise UnsupportedConstruct(f"operator {type(node.op).__name__} not allowed")
        return _validate(node.left, allowed) | _validate(node.right, allowed)
    if isinstance(node, ast.UnaryOp):
        if type(node.op) not in _UNARYOPS:
            raise UnsupportedConstruct(f"operator {type(node.op).__name__} not allowed")
        return _validate(node.operand, allowed)
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise UnsupportedConstruct("only whitelisted function calls are allowed")
        if node.keywords:
            raise UnsupportedConstruct("keyword arguments not allowed")
        arity = FUNCTIONS[node.func.id][0]
        if len(node.args) != arity:
            raise UnsupportedConstruct(
                f"{node.func.id} takes {arity} arguments, got {len(node.args)}"
            )
        used: set[str] = set()
        for arg in node.args:
            used |= _validate(arg, allowed)
        return used
    raise UnsupportedConstruct(f"construct {type(node).__name__} not allowed")


def _eval(node: ast.AST, env: dict[str, float]) -> float:
    if isinstance(node, ast.Constant):
        return float(node.value)
    if isinstance(node, ast.Name):
        return env[node.id]
    if isinstance(node, ast.BinOp):
        return _BINOPS[type(node.op)](_eval(node.left, env), _eval(node.right, env))
    if isinstance(node, ast.UnaryOp):
        return _UNARYOPS[type(node.op)](_eval(node.operand, env))
    if isinstance(node, ast.Call):
        func = FUNCTIONS[node.func.id][1]
        return func(*(_eval(arg, env) for arg in node.args))
    raise EvaluationError(f"unexpected node {type(node).__name__}")  # unreachable


def parse(source: str, param_names=()) -> Expression:
    return Expression(source, frozenset(param_names))
