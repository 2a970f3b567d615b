"""FeatureScript: the restricted expression language for feature extractors."""

from .ast import (
    BinOp,
    Call,
    Expr,
    FeatureProgram,
    FunctionDef,
    Let,
    Literal,
    Name,
    SCALAR,
    VECTOR,
    count_nodes,
    expr_to_source,
    function_to_source,
    program_to_source,
)
from .builtins import CATALOG, BuiltinSpec, catalog_help
from .checker import CheckDiagnostic, check_function
from .evaluator import EvalStats, evaluate_function, total_div, total_pow
from .parser import Diagnostic, parse_program

GRAMMAR_TEXT = """\
program := fndef+
fndef   := "fn" IDENT "(" IDENT ("," IDENT)* ")" "->" ("scalar"|"vector") "{" expr "}"
expr    := "let" IDENT "=" expr ";" expr | arith
arith   := term (("+"|"-") term)*
term    := factor (("*"|"/") factor)*
factor  := base ("^" base)?
base    := NUMBER | IDENT | IDENT "(" args? ")" | "(" expr ")"
args    := expr ("," expr)*

IDENT    := [a-z_][a-z0-9_]*
NUMBER   := non-negative decimal literal, optional fraction and exponent
comments := "#" to end of line

Every parameter is a signal series (vector). Arithmetic operators work on
scalars only; series flow through the builtin catalog. Division by zero
yields NaN, 0^0 yields 1, NaN propagates.
"""

__all__ = [
    "BinOp",
    "Call",
    "CATALOG",
    "BuiltinSpec",
    "CheckDiagnostic",
    "Diagnostic",
    "EvalStats",
    "Expr",
    "FeatureProgram",
    "FunctionDef",
    "GRAMMAR_TEXT",
    "Let",
    "Literal",
    "Name",
    "SCALAR",
    "VECTOR",
    "catalog_help",
    "check_function",
    "count_nodes",
    "evaluate_function",
    "expr_to_source",
    "function_to_source",
    "parse_program",
    "program_to_source",
    "total_div",
    "total_pow",
]
