"""Static checks: builtin existence, arity, the two-kind type system."""

from __future__ import annotations

from dataclasses import dataclass

from .ast import BinOp, Call, Expr, FunctionDef, Let, Literal, Name, SCALAR, VECTOR
from .builtins import CATALOG


@dataclass(frozen=True)
class CheckDiagnostic:
    function: str
    code: str  # unknown-builtin | unbound-identifier | kind-mismatch | arity-mismatch | range
    message: str

    def __str__(self) -> str:
        return f"{self.function}: [{self.code}] {self.message}"


class _CheckFailure(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _infer(expr: Expr, env: dict[str, str]) -> str:
    if isinstance(expr, Literal):
        return SCALAR
    if isinstance(expr, Name):
        kind = env.get(expr.ident)
        if kind is None:
            raise _CheckFailure("unbound-identifier", f"unknown identifier {expr.ident!r}")
        return kind
    if isinstance(expr, Let):
        value_kind = _infer(expr.value, env)
        return _infer(expr.body, {**env, expr.ident: value_kind})
    if isinstance(expr, BinOp):
        left = _infer(expr.left, env)
        right = _infer(expr.right, env)
        if left != SCALAR or right != SCALAR:
            raise _CheckFailure(
                "kind-mismatch",
                f"operator {expr.op!r} needs scalar operands, got {left} {expr.op} {right}",
            )
        return SCALAR
    if isinstance(expr, Call):
        spec = CATALOG.get(expr.func)
        if spec is None:
            raise _CheckFailure("unknown-builtin", f"unknown builtin {expr.func!r}")
        if len(expr.args) != len(spec.param_kinds):
            raise _CheckFailure(
                "arity-mismatch",
                f"{expr.func} takes {len(spec.param_kinds)} argument(s), got {len(expr.args)}",
            )
        for pos, (arg, want) in enumerate(zip(expr.args, spec.param_kinds)):
            got = _infer(arg, env)
            if got != want:
                raise _CheckFailure(
                    "kind-mismatch",
                    f"{expr.func} argument {pos + 1} must be {want}, got {got}",
                )
        if spec.literal_check is not None:
            literals = tuple(a.value if isinstance(a, Literal) else None for a in expr.args)
            problem = spec.literal_check(literals)
            if problem:
                raise _CheckFailure("range", f"{expr.func}: {problem}")
        return spec.return_kind
    raise TypeError(f"not an expression node: {expr!r}")


def check_function(fn: FunctionDef, schema=()) -> list[CheckDiagnostic]:
    """Return the function's typed diagnostics; an empty list means it checks.

    Parameters are series-typed, so every checked body is closed over the
    catalog and terminates by construction.
    """
    env = {p: VECTOR for p in fn.params}
    try:
        inferred = _infer(fn.body, env)
    except _CheckFailure as exc:
        return [CheckDiagnostic(fn.name, exc.code, exc.message)]
    if inferred != fn.return_kind:
        return [
            CheckDiagnostic(
                fn.name,
                "kind-mismatch",
                f"declared -> {fn.return_kind} but body is {inferred}",
            )
        ]
    return []
