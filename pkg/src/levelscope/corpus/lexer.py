"""A small comment- and string-aware tokenizer for Java-like source."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

IDENT = "ident"
STRING = "string"
CHAR = "char"
NUMBER = "number"
OP = "op"


@dataclass(frozen=True, slots=True)
class Token:
    kind: str
    text: str
    line: int  # 1-based
    col: int  # 0-based column within the line
    offset: int  # absolute character offset

    @property
    def end(self) -> int:
        return self.offset + len(self.text)


_TWO_CHAR_OPS = {"->", "::", "==", "!=", "<=", ">=", "&&", "||", "++", "--", "+=", "-="}


def _is_ident_start(c: str) -> bool:
    return c.isalpha() or c == "_" or c == "$"


def _is_ident_part(c: str) -> bool:
    return c.isalnum() or c == "_" or c == "$"


def tokenize(source: str) -> Iterator[Token]:
    """Yield tokens, skipping whitespace and comments.

    Unterminated strings and comments run to the end of the input rather than
    raising; callers get best-effort tokens for malformed code.
    """
    i = 0
    n = len(source)
    line = 1
    line_start = 0

    while i < n:
        c = source[i]
        if c == "\n":
            line += 1
            i += 1
            line_start = i
            continue
        if c.isspace():
            i += 1
            continue
        if source.startswith("//", i):
            j = source.find("\n", i)
            i = n if j < 0 else j
            continue
        if source.startswith("/*", i):
            j = source.find("*/", i + 2)
            end = n if j < 0 else j + 2
            line += source.count("\n", i, end)
            nl = source.rfind("\n", i, end)
            if nl >= 0:
                line_start = nl + 1
            i = end
            continue

        start, start_line, col = i, line, i - line_start
        if source.startswith('"""', i):
            j = source.find('"""', i + 3)
            while j > 0 and _escaped(source, j):
                j = source.find('"""', j + 1)
            end = n if j < 0 else j + 3
            kind = STRING
        elif c == '"' or c == "'":
            j = i + 1
            while j < n and source[j] != c and source[j] != "\n":
                j += 2 if source[j] == "\\" else 1
            end = min(j + 1, n) if j < n and source[j] == c else j
            kind = STRING if c == '"' else CHAR
        elif _is_ident_start(c):
            j = i + 1
            while j < n and _is_ident_part(source[j]):
                j += 1
            end = j
            kind = IDENT
        elif c.isdigit():
            j = i + 1
            while j < n and (source[j].isalnum() or source[j] in "._"):
                j += 1
            end = j
            kind = NUMBER
        else:
            end = i + 2 if source[i : i + 2] in _TWO_CHAR_OPS else i + 1
            kind = OP

        text = source[start:end]
        yield Token(kind, text, start_line, col, start)
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = start + text.rfind("\n") + 1
        i = end


def _escaped(source: str, pos: int) -> bool:
    k = pos - 1
    count = 0
    while k >= 0 and source[k] == "\\":
        count += 1
        k -= 1
    return count % 2 == 1


def string_value(tok: Token) -> str:
    """Literal content of a string token, with simple escapes decoded."""
    text = tok.text
    if text.startswith('"""'):
        body = text[3:-3] if text.endswith('"""') and len(text) >= 6 else text[3:]
        # text blocks start after the opening line terminator
        if body.startswith("\n"):
            body = body[1:]
    else:
        body = text[1:-1] if len(text) >= 2 and text[-1] == text[0] else text[1:]
    return _unescape(body)


_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "b": "\b", "f": "\f", "0": "\0", "s": " "}


def _unescape(body: str) -> str:
    if "\\" not in body:
        return body
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            nxt = body[i + 1]
            out.append(_ESCAPES.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)
