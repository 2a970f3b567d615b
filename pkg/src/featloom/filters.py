"""The four-stage static filter chain admitting extractor functions.

Stages run in a fixed order (extraction, name-parameter, body-content,
constant-return); the first failing stage wins and later stages never see
the function. Failures are verdicts, not exceptions.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dsl import (
    BinOp,
    Call,
    FunctionDef,
    Let,
    Literal,
    Name,
    check_function,
    parse_program,
)
from .dsl.evaluator import ARITH

STAGE_EXTRACTION = "extraction"
STAGE_NAME_PARAMETER = "name-parameter"
STAGE_BODY_CONTENT = "body-content"
STAGE_CONSTANT_RETURN = "constant-return"

STAGES = (STAGE_EXTRACTION, STAGE_NAME_PARAMETER, STAGE_BODY_CONTENT, STAGE_CONSTANT_RETURN)


@dataclass(frozen=True)
class FilterVerdict:
    name: str
    passed: bool
    stage: str
    reason: str

    def to_record(self) -> dict:
        return {"name": self.name, "passed": self.passed, "stage": self.stage, "reason": self.reason}


def channel_prefix(identifier: str, schema) -> str | None:
    """Longest schema channel that prefixes the identifier, or None."""
    best = None
    for chan in schema:
        if identifier.startswith(chan) and (best is None or len(chan) > len(best)):
            best = chan
    return best


def filter_function_extraction(text: str, schema):
    """Stage 1: parse and statically check; survivors are well-formed functions."""
    program, parse_diags = parse_program(text)
    verdicts = [
        FilterVerdict(d.function, False, STAGE_EXTRACTION, d.message) for d in parse_diags
    ]
    passed: list[FunctionDef] = []
    for fn in program.functions:
        diags = check_function(fn, schema)
        if diags:
            verdicts.append(FilterVerdict(fn.name, False, STAGE_EXTRACTION, str(diags[0])))
        else:
            passed.append(fn)
    return passed, verdicts


def filter_name_parameter(fn: FunctionDef, schema) -> FilterVerdict:
    """Stage 2: the function name and at least one parameter carry a sensor prefix."""
    if channel_prefix(fn.name, schema) is None:
        return FilterVerdict(fn.name, False, STAGE_NAME_PARAMETER, "name lacks sensor prefix")
    if not any(channel_prefix(p, schema) is not None for p in fn.params):
        return FilterVerdict(fn.name, False, STAGE_NAME_PARAMETER, "no parameter with sensor prefix")
    return FilterVerdict(fn.name, True, STAGE_NAME_PARAMETER, "")


def _count_param_refs(expr, params: frozenset[str], shadowed: frozenset[str]) -> int:
    if isinstance(expr, Literal):
        return 0
    if isinstance(expr, Name):
        return int(expr.ident in params and expr.ident not in shadowed)
    if isinstance(expr, Let):
        return _count_param_refs(expr.value, params, shadowed) + _count_param_refs(
            expr.body, params, shadowed | {expr.ident}
        )
    if isinstance(expr, BinOp):
        return _count_param_refs(expr.left, params, shadowed) + _count_param_refs(expr.right, params, shadowed)
    if isinstance(expr, Call):
        return sum(_count_param_refs(a, params, shadowed) for a in expr.args)
    raise TypeError(f"not an expression node: {expr!r}")


def filter_body_content(fn: FunctionDef) -> FilterVerdict:
    """Stage 3: a body that references no parameter is a placeholder."""
    refs = _count_param_refs(fn.body, frozenset(fn.params), frozenset())
    if refs == 0:
        return FilterVerdict(fn.name, False, STAGE_BODY_CONTENT, "no parameter referenced")
    return FilterVerdict(fn.name, True, STAGE_BODY_CONTENT, "")


_NONCONST = object()


def fold_constant(expr, env=None):
    """Constant-fold an expression; returns a float or None when parameter-dependent.

    Folding uses the evaluator's total arithmetic plus multiply-by-zero
    absorption, so disguises like `mean(x) * 0 + c` still fold.
    """
    env = env or {}
    result = _fold(expr, env)
    return None if result is _NONCONST else result


def _fold(expr, env):
    if isinstance(expr, Literal):
        return expr.value
    if isinstance(expr, Name):
        return env.get(expr.ident, _NONCONST)
    if isinstance(expr, Let):
        value = _fold(expr.value, env)
        return _fold(expr.body, {**env, expr.ident: value})
    if isinstance(expr, BinOp):
        left = _fold(expr.left, env)
        right = _fold(expr.right, env)
        if left is not _NONCONST and right is not _NONCONST:
            return ARITH[expr.op](left, right)
        if expr.op == "*" and (left == 0.0 or right == 0.0):
            return 0.0
        return _NONCONST
    if isinstance(expr, Call):
        # Builtins need at least one series argument, which never folds.
        return _NONCONST
    raise TypeError(f"not an expression node: {expr!r}")


def filter_constant_return(fn: FunctionDef) -> FilterVerdict:
    """Stage 4: reject bodies that fold to a parameter-independent value."""
    value = fold_constant(fn.body)
    if value is not None:
        return FilterVerdict(fn.name, False, STAGE_CONSTANT_RETURN, f"body folds to constant {value!r}")
    return FilterVerdict(fn.name, True, STAGE_CONSTANT_RETURN, "")


def run_filter_chain(text: str, schema):
    """Run all four stages in order.

    Returns (admitted functions, verdicts). Every parsed-or-attempted function
    gets exactly one verdict; survivors get a passing verdict at the last stage.
    """
    passed, verdicts = filter_function_extraction(text, schema)
    admitted: list[FunctionDef] = []
    for fn in passed:
        verdict = filter_name_parameter(fn, schema)
        if verdict.passed:
            verdict = filter_body_content(fn)
        if verdict.passed:
            verdict = filter_constant_return(fn)
        verdicts.append(verdict)
        if verdict.passed:
            admitted.append(fn)
    return admitted, verdicts
