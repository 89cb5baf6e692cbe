"""A small expression language for scenario member fields.

Allowed: numbers, + - * / **, unary minus, the functions sin cos exp log sqrt pow,
the constants pi, e, I (imaginary unit) and the variables x, y, z = x + iy.
Parsing goes through :mod:`ast`; any other node is rejected with its position.
"""
from __future__ import annotations

import ast

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log, "sqrt": np.sqrt,
             "pow": np.power}
CONSTANTS = {"pi": np.pi, "e": np.e, "I": 1j}
VARIABLES = ("x", "y", "z")

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide,
           ast.Pow: np.power}


class ExpressionError(ValueError):
    def __init__(self, message: str, source: str, line: int = 1, col: int = 0):
        super().__init__(f"{message} at line {line}, column {col + 1}: {source!r}")
        self.line, self.col = line, col + 1


def _check(node: ast.AST, src: str) -> None:
    def bad(n, what):
        raise ExpressionError(f"{what} not allowed", src, getattr(n, "lineno", 1), getattr(n, "col_offset", 0))

    for n in ast.walk(node):
        if isinstance(n, (ast.Expression, ast.Load)) or type(n) in _BINOPS:
            continue
        if isinstance(n, (ast.USub, ast.UAdd)):
            continue
        if isinstance(n, ast.BinOp):
            if type(n.op) not in _BINOPS:
                bad(n, f"operator {type(n.op).__name__}")
        elif isinstance(n, ast.UnaryOp):
            if not isinstance(n.op, (ast.USub, ast.UAdd)):
                bad(n, f"operator {type(n.op).__name__}")
        elif isinstance(n, ast.Constant):
            if isinstance(n.value, bool) or not isinstance(n.value, (int, float, complex)):
                bad(n, f"literal {n.value!r}")
        elif isinstance(n, ast.Name):
            if n.id not in FUNCTIONS and n.id not in CONSTANTS and n.id not in VARIABLES:
                bad(n, f"unknown name {n.id!r}")
        elif isinstance(n, ast.Call):
            if not isinstance(n.func, ast.Name) or n.func.id not in FUNCTIONS or n.keywords:
                bad(n, "call")
            want = 2 if n.func.id == "pow" else 1
            if len(n.args) != want:
                bad(n, f"{n.func.id} with {len(n.args)} arguments")
        else:
            bad(n, type(n).__name__)


def parse(source: str) -> ast.Expression:
    src = str(source).strip()
    try:
        tree = ast.parse(src, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(exc.msg, src, exc.lineno or 1, (exc.offset or 1) - 1) from None
    _check(tree, src)
    return tree


def evaluate(source: str | float | int, x: np.ndarray, y: np.ndarray):
    """Evaluate on the chart arrays; result is broadcast to x's shape."""
    if isinstance(source, (int, float, complex)) and not isinstance(source, bool):
        return np.full(np.shape(x), source, dtype=complex if isinstance(source, complex) else float)
    tree = parse(source)
    env = {"x": x, "y": y, "z": x + 1j * y, **CONSTANTS}

    def ev(n):
        if isinstance(n, ast.Expression):
            return ev(n.body)
        if isinstance(n, ast.Constant):
            return n.value
        if isinstance(n, ast.Name):
            return env[n.id]
        if isinstance(n, ast.UnaryOp):
            v = ev(n.operand)
            return -v if isinstance(n.op, ast.USub) else v
        if isinstance(n, ast.BinOp):
            return _BINOPS[type(n.op)](ev(n.left), ev(n.right))
        return FUNCTIONS[n.func.id](*[ev(a) for a in n.args])

    with np.errstate(all="raise", under="ignore"):
        try:
            out = np.broadcast_to(np.asarray(ev(tree)), np.shape(x)).copy()
        except FloatingPointError as exc:
            raise ExpressionError(f"numerical error ({exc})", str(source)) from None
    if np.iscomplexobj(out) and not np.any(out.imag):
        out = out.real
    return out


__all__ = ["evaluate", "parse", "ExpressionError", "FUNCTIONS", "CONSTANTS", "VARIABLES"]
