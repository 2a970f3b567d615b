"""Tokenizer for FeatureScript source text."""

from __future__ import annotations

import re
from dataclasses import dataclass

KEYWORDS = {"fn", "let", "scalar", "vector"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<number>(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?)
  | (?P<ident>[a-z_][a-z0-9_]*)
  | (?P<arrow>->)
  | (?P<sym>[()+\-*/^{},;=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # keyword text, "ident", "number", "->", a symbol char, or "error"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    """Scan the whole input; unknown characters become 'error' tokens so that
    one bad function cannot poison its siblings."""
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            tokens.append(Token("error", text[pos], line, pos - line_start + 1))
            pos += 1
            continue
        kind = m.lastgroup
        value = m.group()
        col = pos - line_start + 1
        if kind == "ws" or kind == "comment":
            pass
        elif kind == "number":
            tokens.append(Token("number", value, line, col))
        elif kind == "ident":
            tok_kind = value if value in KEYWORDS else "ident"
            tokens.append(Token(tok_kind, value, line, col))
        elif kind == "arrow":
            tokens.append(Token("->", value, line, col))
        else:
            tokens.append(Token(value, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    return tokens
