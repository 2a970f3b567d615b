"""Recursive-descent parser with per-function error isolation.

The token stream is split at every `fn` keyword; each segment is parsed as
one candidate function definition. A malformed function yields a diagnostic
and is skipped without aborting its siblings.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ast import BinOp, Call, FeatureProgram, FunctionDef, Let, Literal, Name
from .lexer import Token, tokenize


@dataclass(frozen=True)
class Diagnostic:
    function: str  # declared name when known, else an ordinal placeholder
    message: str
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        loc = f" (line {self.line})" if self.line else ""
        return f"{self.function}: {self.message}{loc}"


class _ParseFailure(Exception):
    def __init__(self, message: str, token: Token | None):
        super().__init__(message)
        self.message = message
        self.token = token


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self) -> Token | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def advance(self) -> Token:
        tok = self.peek()
        if tok is None:
            raise _ParseFailure("unexpected end of function", None)
        if tok.kind == "error":
            raise _ParseFailure(f"unexpected character {tok.text!r}", tok)
        self.i += 1
        return tok

    def expect(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None:
            raise _ParseFailure(f"expected {kind!r}, found end of function", None)
        if tok.kind != kind:
            raise _ParseFailure(f"expected {kind!r}, found {tok.text!r}", tok)
        return self.advance()

    def at(self, kind: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.kind == kind

    def parse_fndef(self) -> FunctionDef:
        self.expect("fn")
        name = self.expect("ident").text
        self.expect("(")
        params = [self.expect("ident").text]
        while self.at(","):
            self.advance()
            params.append(self.expect("ident").text)
        self.expect(")")
        self.expect("->")
        tok = self.peek()
        if tok is None or tok.kind not in ("scalar", "vector"):
            raise _ParseFailure("expected 'scalar' or 'vector' after '->'", tok)
        return_kind = self.advance().kind
        self.expect("{")
        body = self.parse_expr()
        self.expect("}")
        if self.peek() is not None:
            raise _ParseFailure(f"unexpected {self.peek().text!r} after function body", self.peek())
        if len(set(params)) != len(params):
            raise _ParseFailure("duplicate parameter name", None)
        return FunctionDef(name=name, params=tuple(params), return_kind=return_kind, body=body)

    def parse_expr(self):
        if self.at("let"):
            self.advance()
            ident = self.expect("ident").text
            self.expect("=")
            value = self.parse_expr()
            self.expect(";")
            body = self.parse_expr()
            return Let(ident, value, body)
        return self.parse_arith()

    def parse_arith(self):
        node = self.parse_term()
        while self.at("+") or self.at("-"):
            op = self.advance().kind
            node = BinOp(op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_factor()
        while self.at("*") or self.at("/"):
            op = self.advance().kind
            node = BinOp(op, node, self.parse_factor())
        return node

    def parse_factor(self):
        node = self.parse_base()
        if self.at("^"):
            self.advance()
            node = BinOp("^", node, self.parse_base())
        return node

    def parse_base(self):
        tok = self.peek()
        if tok is None:
            raise _ParseFailure("expected an expression, found end of function", None)
        if tok.kind == "number":
            self.advance()
            return Literal(float(tok.text))
        if tok.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                args: list = []
                if not self.at(")"):
                    args.append(self.parse_expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.parse_expr())
                self.expect(")")
                return Call(tok.text, tuple(args))
            return Name(tok.text)
        if tok.kind == "(":
            self.advance()
            node = self.parse_expr()
            self.expect(")")
            return node
        raise _ParseFailure(f"expected an expression, found {tok.text!r}", tok)


def _segment_name(tokens: list[Token], ordinal: int) -> str:
    # Second token of a segment is the declared name when well-formed enough.
    if len(tokens) >= 2 and tokens[1].kind == "ident":
        return tokens[1].text
    return f"<function #{ordinal}>"


def parse_program(text: str):
    """Parse every function definition in `text`.

    Returns (FeatureProgram, diagnostics). Functions that fail to parse are
    reported and skipped; duplicate names keep the first definition.
    """
    tokens = tokenize(text)
    starts = [i for i, tok in enumerate(tokens) if tok.kind == "fn"]
    diagnostics: list[Diagnostic] = []
    functions: list[FunctionDef] = []

    if not starts:
        diagnostics.append(Diagnostic("<program>", "no function found"))
        return FeatureProgram((), text), diagnostics
    if starts[0] != 0:
        stray = tokens[0]
        diagnostics.append(
            Diagnostic("<program>", f"unexpected {stray.text!r} before first function", stray.line, stray.col)
        )

    seen: set[str] = set()
    bounds = starts + [len(tokens)]
    for ordinal, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:]), start=1):
        segment = tokens[lo:hi]
        name = _segment_name(segment, ordinal)
        try:
            fn = _Parser(segment).parse_fndef()
        except _ParseFailure as exc:
            line = exc.token.line if exc.token else segment[0].line
            col = exc.token.col if exc.token else 0
            diagnostics.append(Diagnostic(name, exc.message, line, col))
            continue
        if fn.name in seen:
            diagnostics.append(Diagnostic(fn.name, "duplicate function name; keeping the first definition"))
            continue
        seen.add(fn.name)
        functions.append(fn)
    return FeatureProgram(tuple(functions), text), diagnostics
