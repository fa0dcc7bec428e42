from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class SourceSpan:
    line: int  # 1-based
    column: int  # 1-based
    offset: int  # byte offset into the UTF-8 document


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    code: str  # SYNTAX, UNKNOWN_KEY, BAD_VALUE, DUPLICATE_KEY, STRUCTURE
    message: str
    node: Optional[str] = None

    def __str__(self):
        where = f" [{self.node}]" if self.node else ""
        return f"{self.span.line}:{self.span.column}: {self.code}{where} {self.message}"


class ParseFailure(Exception):
    """Raised when a document does not parse; ``errors`` lists every ParseError."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))

    @property
    def codes(self):
        return {e.code for e in self.errors}
