"""Scalar/tuple/map literals shared by the compact format and masking."""
from __future__ import annotations

import re
from typing import NamedTuple

TOKEN_RE = re.compile(
    r"(?P<ws>[ ]+)"
    r"|(?P<punct>[{}\[\],:])"
    r"|(?P<num>-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)"
    r"|(?P<ref>[a-z_][a-z0-9_]*\.[a-z_][a-z0-9_]*)"
    r"|(?P<sym>[a-z_][a-z0-9_]*)"
)


class Ref(NamedTuple):
    node: str
    slot: str

    def __str__(self):
        return f"{self.node}.{self.slot}"


class ValueSyntaxError(Exception):
    def __init__(self, column, message):
        super().__init__(message)
        self.column = column  # 0-based within the parsed text


def format_scalar(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def format_value(x) -> str:
    if isinstance(x, Ref):
        return str(x)
    if isinstance(x, (tuple, list)):
        return "[" + ", ".join(format_scalar(e) for e in x) + "]"
    return format_scalar(x)


def format_map(pairs) -> str:
    return "{" + ", ".join(f"{k}: {format_value(v)}" for k, v in pairs) + "}"


def tokenize(text, base=0):
    """Tokens as (kind, text, column); raises ValueSyntaxError on junk."""
    pos = 0
    out = []
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        if m is None:
            raise ValueSyntaxError(base + pos, f"unexpected character {text[pos]!r}")
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group(), base + pos))
        pos = m.end()
    return out


def _scalar(tok):
    kind, s, col = tok
    if kind == "num":
        if "." in s or "e" in s or "E" in s:
            return float(s)
        return int(s)
    if kind == "ref":
        node, slot = s.split(".")
        return Ref(node, slot)
    if kind == "sym":
        if s == "true":
            return True
        if s == "false":
            return False
        return s
    raise ValueSyntaxError(col, f"expected a value, got {s!r}")


class _Cursor:
    def __init__(self, toks, end_col):
        self.toks = toks
        self.i = 0
        self.end_col = end_col

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, text=None):
        t = self.peek()
        if t is None:
            raise ValueSyntaxError(self.end_col, "unexpected end of line")
        if text is not None and t[1] != text:
            raise ValueSyntaxError(t[2], f"expected {text!r}, got {t[1]!r}")
        self.i += 1
        return t


def _list(cur):
    cur.take("[")
    items = []
    if cur.peek() and cur.peek()[1] == "]":
        cur.take()
        return tuple(items)
    while True:
        items.append(_scalar(cur.take()))
        t = cur.take()
        if t[1] == "]":
            return tuple(items)
        if t[1] != ",":
            raise ValueSyntaxError(t[2], f"expected ',' or ']', got {t[1]!r}")


def _value(cur):
    t = cur.peek()
    if t is None:
        raise ValueSyntaxError(cur.end_col, "missing value")
    if t[1] == "[":
        return _list(cur)
    return _scalar(cur.take())


def parse_value(text, base=0):
    cur = _Cursor(tokenize(text, base), base + len(text))
    v = _value(cur)
    if cur.peek() is not None:
        raise ValueSyntaxError(cur.peek()[2], "trailing characters after value")
    return v


def parse_map(text, base=0):
    """Parse ``{k: v, ...}`` into a list of (key, value, column) preserving order."""
    cur = _Cursor(tokenize(text, base), base + len(text))
    cur.take("{")
    pairs = []
    if cur.peek() and cur.peek()[1] == "}":
        cur.take()
    else:
        while True:
            k = cur.take()
            if k[0] != "sym":
                raise ValueSyntaxError(k[2], f"expected a key, got {k[1]!r}")
            cur.take(":")
            pairs.append((k[1], _value(cur), k[2]))
            t = cur.take()
            if t[1] == "}":
                break
            if t[1] != ",":
                raise ValueSyntaxError(t[2], f"expected ',' or '}}', got {t[1]!r}")
    if cur.peek() is not None:
        raise ValueSyntaxError(cur.peek()[2], "trailing characters after map")
    return pairs


def map_value_spans(text, base=0):
    """(key, start, end) column spans of every value in a flow map, for masking."""
    toks = tokenize(text, base)
    spans = []
    depth = 0
    i = 0
    while i < len(toks):
        kind, s, col = toks[i]
        if s == "{":
            depth += 1
        elif s == "}":
            depth -= 1
        elif kind == "sym" and depth == 1 and i + 1 < len(toks) and toks[i + 1][1] == ":":
            j = i + 2
            start = toks[j][2]
            if toks[j][1] == "[":
                while toks[j][1] != "]":
                    j += 1
            end = toks[j][2] + len(toks[j][1])
            spans.append((s, start, end))
            i = j
        i += 1
    return spans
