"""Pure, terminating evaluation of checked functions over a signal window.

Total arithmetic semantics: x/0 is NaN, 0^0 is 1, NaN operands propagate.
Overflow to infinity is allowed and caught later by execution verification.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import SignalWindow
from .ast import BinOp, Call, FunctionDef, Let, Literal, Name, SCALAR, count_nodes
from .builtins import CATALOG, NAN


def total_div(a: float, b: float) -> float:
    if a != a or b != b:
        return NAN
    if b == 0.0:
        return NAN
    return a / b


def total_pow(a: float, b: float) -> float:
    if a != a or b != b:
        return NAN
    if a == 0.0 and b == 0.0:
        return 1.0
    try:
        r = a**b
    except OverflowError:
        return math.inf if a > 1.0 or (a < -1.0 and b % 2 == 0) else -math.inf
    except (ValueError, ZeroDivisionError):
        return NAN
    if isinstance(r, complex):
        return NAN
    return float(r)


ARITH = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": total_div,
    "^": total_pow,
}


class EvalStats:
    """Visited-node counter backing the termination bound assertion."""

    __slots__ = ("nodes",)

    def __init__(self):
        self.nodes = 0


def _eval(expr, env: dict, stats: EvalStats):
    stats.nodes += 1
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Name):
        return env[expr.ident]
    if isinstance(expr, Let):
        value = _eval(expr.value, env, stats)
        return _eval(expr.body, {**env, expr.ident: value}, stats)
    if isinstance(expr, BinOp):
        left = _eval(expr.left, env, stats)
        right = _eval(expr.right, env, stats)
        return ARITH[expr.op](left, right)
    if isinstance(expr, Call):
        args = [_eval(a, env, stats) for a in expr.args]
        return CATALOG[expr.func].func(*args)
    raise TypeError(f"not an expression node: {expr!r}")


def evaluate_function(fn: FunctionDef, window: SignalWindow, binding: dict[str, str], stats: EvalStats | None = None):
    """Evaluate a checked function on one window.

    `binding` maps each parameter to a channel name present in the window.
    Returns a float for scalar functions, a 1-d ndarray for vector ones.
    """
    env = {}
    for param in fn.params:
        channel = binding[param]
        env[param] = window.channels[channel].values
    if stats is None:
        stats = EvalStats()
    with np.errstate(all="ignore"):
        result = _eval(fn.body, env, stats)
    assert stats.nodes <= count_nodes(fn.body), "evaluator exceeded its node-count bound"
    if fn.return_kind == SCALAR:
        return float(result)
    return np.asarray(result, dtype=np.float64)
