"""Tokenizer for the supported C subset.

Tokens carry byte spans into the original source, so the source can be
reconstructed from tokens plus the skipped gaps (whitespace and comments).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import LexError

KEYWORDS = frozenset({"int", "short", "if", "else", "while", "for", "return"})

_TOKEN_RE = re.compile(
    r"""
      (?P<skip>\s+|//[^\n]*|/\*.*?\*/)
    | (?P<number>\d+)
    | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
    | (?P<operator><=|>=|==|!=|&&|\|\||[-+*/%<>=!])
    | (?P<punct>[(){};,])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | identifier | int-literal | operator | punctuation
    text: str
    start: int
    end: int

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


def tokenize(source: str) -> list[Token]:
    """Split source into tokens, dropping whitespace and comments.

    Raises LexError at the first character outside the subset alphabet.
    """
    tokens: list[Token] = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise LexError(pos)
        pos = m.end()
        if m.lastgroup == "skip":
            continue
        text = m.group()
        if m.lastgroup == "number":
            kind = "int-literal"
        elif m.lastgroup == "word":
            kind = "keyword" if text in KEYWORDS else "identifier"
        elif m.lastgroup == "operator":
            kind = "operator"
        else:
            kind = "punctuation"
        tokens.append(Token(kind, text, m.start(), m.end()))
    return tokens


def reconstruct(source: str, tokens: list[Token]) -> str:
    """Rebuild the source from token spans and the original gaps between them.

    Used by tests to assert lossless lexing.
    """
    parts = []
    prev_end = 0
    for tok in tokens:
        parts.append(source[prev_end:tok.start])
        parts.append(tok.text)
        prev_end = tok.end
    parts.append(source[prev_end:])
    return "".join(parts)
