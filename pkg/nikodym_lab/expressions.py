"""
Expression Grammar

Small arithmetic language used by custom metrics and region definitions in
experiment configs:

- operators: + - * / ^ (and **), unary minus
- functions: sin cos tan exp log sqrt abs
- variables: x1 x2 x3; constants: pi, e
- comparisons (<, <=, >, >=, chained) and `and` / `or` for regions

Strings are parsed with the Python `ast` module and compiled into numpy
closures; nothing is passed to eval().
"""

import ast
import logging
from typing import Callable, Iterable, List, Sequence, Union

import numpy as np

from .errors import ExpressionError

logger = logging.getLogger(__name__)

Evaluator = Callable[[Sequence[np.ndarray]], np.ndarray]

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}

_CONSTANTS = {"pi": np.pi, "e": np.e}

VARIABLES = ("x1", "x2", "x3")

_BINARY = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}

_COMPARE = {
    ast.Lt: np.less,
    ast.LtE: np.less_equal,
    ast.Gt: np.greater,
    ast.GtE: np.greater_equal,
}


class Expression:
    """
    A compiled expression in x1, x2, x3.

    Calling the expression with an array of points of shape (..., 3) returns
    an array of shape (...) (float for arithmetic, bool for inequalities).
    """

    def __init__(self, source: str):
        self.source = source.strip()
        if not self.source:
            raise ExpressionError("empty expression")
        try:
            # ^ is exponentiation in config files
            tree = ast.parse(self.source.replace("^", "**"), mode="eval")
        except SyntaxError as e:
            raise ExpressionError(f"cannot parse '{source}': {e.msg}") from e
        self._fn = self._compile(tree.body)
        self.is_predicate = isinstance(tree.body, (ast.Compare, ast.BoolOp))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        if points.shape[-1] != 3:
            raise ExpressionError(f"expected points of shape (..., 3), got {points.shape}")
        coords = (points[..., 0], points[..., 1], points[..., 2])
        with np.errstate(all="ignore"):
            value = self._fn(coords)
        return np.broadcast_to(value, points.shape[:-1]).copy()

    def __repr__(self) -> str:
        return f"Expression('{self.source}')"

    def _compile(self, node: ast.AST) -> Evaluator:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            value = float(node.value)
            return lambda c: value

        if isinstance(node, ast.Name):
            if node.id in VARIABLES:
                index = VARIABLES.index(node.id)
                return lambda c: c[index]
            if node.id in _CONSTANTS:
                value = _CONSTANTS[node.id]
                return lambda c: value
            raise ExpressionError(f"unknown name '{node.id}' in '{self.source}'")

        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            operand = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda c: -operand(c)
            return operand

        if isinstance(node, ast.BinOp) and type(node.op) in _BINARY:
            op = _BINARY[type(node.op)]
            left, right = self._compile(node.left), self._compile(node.right)
            return lambda c: op(left(c), right(c))

        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCTIONS:
                raise ExpressionError(f"unsupported function call in '{self.source}'")
            if len(node.args) != 1 or node.keywords:
                raise ExpressionError(f"{node.func.id}() takes exactly one argument")
            func = _FUNCTIONS[node.func.id]
            arg = self._compile(node.args[0])
            return lambda c: func(arg(c))

        if isinstance(node, ast.Compare):
            terms = [self._compile(node.left)] + [self._compile(n) for n in node.comparators]
            ops = []
            for op in node.ops:
                if type(op) not in _COMPARE:
                    raise ExpressionError(f"unsupported comparison in '{self.source}'")
                ops.append(_COMPARE[type(op)])

            def compare(c):
                values = [t(c) for t in terms]
                result = ops[0](values[0], values[1])
                for k in range(1, len(ops)):
                    result = np.logical_and(result, ops[k](values[k], values[k + 1]))
                return result

            return compare

        if isinstance(node, ast.BoolOp):
            parts = [self._compile(v) for v in node.values]
            combine = np.logical_and if isinstance(node.op, ast.And) else np.logical_or

            def boolean(c):
                result = parts[0](c)
                for part in parts[1:]:
                    result = combine(result, part(c))
                return result

            return boolean

        raise ExpressionError(f"unsupported syntax in '{self.source}'")


class Region:
    """Conjunction of inequality expressions, used as a set indicator."""

    def __init__(self, inequalities: Union[str, Iterable[str]]):
        if isinstance(inequalities, str):
            inequalities = [inequalities]
        self.expressions: List[Expression] = [Expression(s) for s in inequalities]
        if not self.expressions:
            raise ExpressionError("region needs at least one inequality")
        for expr in self.expressions:
            if not expr.is_predicate:
                raise ExpressionError(f"'{expr.source}' is not an inequality")

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        inside = np.ones(points.shape[:-1], dtype=bool)
        for expr in self.expressions:
            inside &= expr(points).astype(bool)
        return inside

    def __repr__(self) -> str:
        return "Region(" + " and ".join(e.source for e in self.expressions) + ")"
