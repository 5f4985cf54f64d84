"""Logging call extraction from Java-like source.

Recognizes ``<receiver>.<level>(args)`` where ``receiver`` matches the logger
name pattern and ``level`` is a name from the level scale. Method boundaries
come from brace balancing over the token stream, not a full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..levels import LevelScale
from .lexer import IDENT, STRING, Token, string_value, tokenize
from .model import DEFAULT_LOGGER_PATTERN, MASK, UNKNOWN_COMPONENT, LoggingStatement

CONTROL_KEYWORDS = frozenset(
    {"if", "for", "while", "switch", "catch", "synchronized", "try", "do", "else", "return"}
)
TYPE_KEYWORDS = frozenset({"class", "interface", "enum", "record"})
# tokens allowed between a method's closing paren and its body: `throws A, b.C<D>`
_THROWS_TOKENS = frozenset({".", ",", "<", ">", "?", "&", "[", "]"})

_SANITIZED_MASK = MASK.replace("_", "-")


@dataclass
class _Brace:
    kind: str  # method | class | block
    start_line: int


def _match_backward(tokens: list[Token], close_idx: int, open_text: str, close_text: str) -> int:
    depth = 0
    for j in range(close_idx, -1, -1):
        t = tokens[j].text
        if t == close_text:
            depth += 1
        elif t == open_text:
            depth -= 1
            if depth == 0:
                return j
    return -1


def _match_forward(tokens: list[Token], open_idx: int, open_text: str, close_text: str) -> int:
    depth = 0
    for j in range(open_idx, len(tokens)):
        t = tokens[j].text
        if t == open_text:
            depth += 1
        elif t == close_text:
            depth -= 1
            if depth == 0:
                return j
    return -1


def _preceded_by_new(tokens: list[Token], idx: int) -> bool:
    """True if the type expression ending at ``idx`` follows ``new``."""
    j = idx
    while j >= 0 and (tokens[j].kind == IDENT or tokens[j].text in {".", "<", ">", ",", "?"}):
        if tokens[j].text == "new":
            return True
        j -= 1
    return False


def _classify_paren_block(tokens: list[Token], paren_close: int) -> tuple[str, int]:
    p = _match_backward(tokens, paren_close, "(", ")")
    if p <= 0:
        return "block", tokens[paren_close].line
    before = tokens[p - 1]
    if before.kind != IDENT:
        return "block", before.line
    if before.text in CONTROL_KEYWORDS:
        return "block", before.line
    if p >= 2 and tokens[p - 2].text in TYPE_KEYWORDS:
        return "class", before.line
    if _preceded_by_new(tokens, p - 1):
        return "class", before.line
    return "method", before.line


def _classify_brace(tokens: list[Token], i: int) -> tuple[str, int]:
    """Classify the ``{`` at token index ``i`` and return (kind, header line)."""
    if i == 0:
        return "block", tokens[i].line
    prev = tokens[i - 1]
    if prev.text == ")":
        return _classify_paren_block(tokens, i - 1)
    if prev.text == "->":
        return "block", prev.line
    # `) throws A, B {`
    j = i - 1
    while j >= 0 and (tokens[j].kind == IDENT or tokens[j].text in _THROWS_TOKENS):
        if tokens[j].text == "throws":
            if j > 0 and tokens[j - 1].text == ")":
                return _classify_paren_block(tokens, j - 1)
            break
        j -= 1
    # class/interface/enum/record header back to the previous statement boundary
    j = i - 1
    while j >= 0 and tokens[j].text not in {";", "{", "}"}:
        if tokens[j].kind == IDENT and tokens[j].text in TYPE_KEYWORDS:
            return "class", tokens[j].line
        j -= 1
    return "block", tokens[i].line


def method_spans(tokens: list[Token], n_lines: int) -> list[tuple[int, int, int, int]]:
    """Method bodies as (start_line, end_line, open_token_idx, close_token_idx)."""
    stack: list[tuple[_Brace, int]] = []
    spans = []
    for i, tok in enumerate(tokens):
        if tok.text == "{":
            kind, line = _classify_brace(tokens, i)
            stack.append((_Brace(kind, line), i))
        elif tok.text == "}" and stack:
            brace, open_idx = stack.pop()
            if brace.kind == "method":
                spans.append((brace.start_line, tok.line, open_idx, i))
    last = len(tokens) - 1
    for brace, open_idx in stack:
        if brace.kind == "method":
            spans.append((brace.start_line, n_lines, open_idx, last))
    spans.sort(key=lambda s: (s[2], s[3]))
    return spans


def _enclosing_span(spans, tok_idx: int) -> tuple[int, int] | None:
    best = None
    for start, end, o, c in spans:
        if o < tok_idx <= c and (best is None or o > best[2]):
            best = (start, end, o)
    return None if best is None else (best[0], best[1])


def _sanitize(text: str) -> str:
    return text.replace(MASK, _SANITIZED_MASK)


def masked_context(
    lines: list[str], lo: int, hi: int, level_tok: Token
) -> str:
    out = []
    for ln in range(lo, hi + 1):
        text = lines[ln - 1]
        if ln == level_tok.line:
            left = text[: level_tok.col]
            right = text[level_tok.col + len(level_tok.text) :]
            out.append(_sanitize(left) + MASK + _sanitize(right))
        else:
            out.append(_sanitize(text))
    return "\n".join(out)


def find_log_calls(tokens: list[Token], scale: LevelScale, logger_re: re.Pattern[str]):
    """Yield (level_token_idx, close_paren_idx, level_name) for each logging call."""
    n = len(tokens)
    for i in range(2, n - 1):
        tok = tokens[i]
        if tok.kind != IDENT or tok.text.lower() not in scale.names:
            continue
        if tokens[i - 1].text != "." or tokens[i + 1].text != "(":
            continue
        recv = tokens[i - 2]
        if recv.kind != IDENT or not logger_re.match(recv.text):
            continue
        close = _match_forward(tokens, i + 1, "(", ")")
        yield i, (close if close >= 0 else n - 1), tok.text.lower()


def extract_logging_statements(
    source: str,
    path: str,
    *,
    scale: LevelScale | None = None,
    logger_pattern: str = DEFAULT_LOGGER_PATTERN,
    context_lines: int = 10,
    component: str = UNKNOWN_COMPONENT,
) -> list[LoggingStatement]:
    scale = scale or LevelScale()
    logger_re = re.compile(logger_pattern)
    tokens = list(tokenize(source))
    lines = source.split("\n")
    n_lines = max(len(lines), 1)
    if not lines:
        lines = [""]
    spans = method_spans(tokens, n_lines)

    out = []
    for ordinal, (lvl_idx, close_idx, level) in enumerate(find_log_calls(tokens, scale, logger_re)):
        level_tok = tokens[lvl_idx]
        message = "".join(
            string_value(t) for t in tokens[lvl_idx + 2 : close_idx] if t.kind == STRING
        )
        call_end = tokens[close_idx].line
        span = _enclosing_span(spans, lvl_idx) or (1, n_lines)
        lo = max(1, level_tok.line - context_lines, span[0])
        hi = min(n_lines, call_end + context_lines, max(span[1], call_end))
        out.append(
            LoggingStatement(
                id=f"{path}#{ordinal}",
                file=path,
                line=level_tok.line,
                level=level,
                message_template=message,
                method_span=span,
                context_window=masked_context(lines, lo, hi, level_tok),
                component=component,
            )
        )
    return out


def mask_snippet(
    snippet: str, scale: LevelScale | None = None, logger_pattern: str = DEFAULT_LOGGER_PATTERN
) -> str:
    """Mask the level token of every logging call in a free-standing snippet."""
    scale = scale or LevelScale()
    tokens = list(tokenize(snippet))
    calls = list(find_log_calls(tokens, scale, re.compile(logger_pattern)))
    text = _sanitize(snippet)
    # sanitizing preserves length, so token offsets still line up
    for lvl_idx, _close, _level in reversed(calls):
        tok = tokens[lvl_idx]
        text = text[: tok.offset] + MASK + text[tok.offset + len(tok.text) :]
    return text
