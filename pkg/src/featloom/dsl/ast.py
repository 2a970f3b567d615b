"""FeatureScript syntax tree and its canonical source renderer."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

SCALAR = "scalar"
VECTOR = "vector"


@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class Name:
    ident: str


@dataclass(frozen=True)
class Let:
    ident: str
    value: "Expr"
    body: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple["Expr", ...]


Expr = Union[Literal, Name, Let, BinOp, Call]


@dataclass(frozen=True)
class FunctionDef:
    name: str
    params: tuple[str, ...]
    return_kind: str  # scalar | vector
    body: Expr


@dataclass(frozen=True, eq=False)
class FeatureProgram:
    functions: tuple[FunctionDef, ...]
    source_text: str

    def __len__(self) -> int:
        return len(self.functions)


# Precedence levels, lowest binds loosest. Power operands are grammatical
# `base` atoms, so both sides print at atom level.
_PREC_LET = 0
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_POW = 3
_PREC_ATOM = 4

_BINOP_PREC = {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}


def expr_to_source(expr: Expr, min_prec: int = _PREC_LET) -> str:
    if isinstance(expr, Literal):
        return repr(expr.value)
    if isinstance(expr, Name):
        return expr.ident
    if isinstance(expr, Call):
        args = ", ".join(expr_to_source(a, _PREC_LET) for a in expr.args)
        return f"{expr.func}({args})"
    if isinstance(expr, Let):
        text = (
            f"let {expr.ident} = {expr_to_source(expr.value, _PREC_LET)}; "
            f"{expr_to_source(expr.body, _PREC_LET)}"
        )
        return f"({text})" if min_prec > _PREC_LET else text
    if isinstance(expr, BinOp):
        prec = _BINOP_PREC[expr.op]
        if expr.op == "^":
            left = expr_to_source(expr.left, _PREC_ATOM)
            right = expr_to_source(expr.right, _PREC_ATOM)
        else:
            left = expr_to_source(expr.left, prec)
            right = expr_to_source(expr.right, prec + 1)
        text = f"{left} {expr.op} {right}"
        return f"({text})" if prec < min_prec else text
    raise TypeError(f"not an expression node: {expr!r}")


def function_to_source(fn: FunctionDef) -> str:
    params = ", ".join(fn.params)
    return f"fn {fn.name}({params}) -> {fn.return_kind} {{ {expr_to_source(fn.body)} }}"


def program_to_source(program: FeatureProgram) -> str:
    return "\n".join(function_to_source(f) for f in program.functions) + "\n"


def count_nodes(expr: Expr) -> int:
    """Number of AST nodes; the evaluator visits each node at most once."""
    if isinstance(expr, (Literal, Name)):
        return 1
    if isinstance(expr, Let):
        return 1 + count_nodes(expr.value) + count_nodes(expr.body)
    if isinstance(expr, BinOp):
        return 1 + count_nodes(expr.left) + count_nodes(expr.right)
    if isinstance(expr, Call):
        return 1 + sum(count_nodes(a) for a in expr.args)
    raise TypeError(f"not an expression node: {expr!r}")
