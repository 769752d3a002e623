"""Parser and serializer for the line-oriented operator output format.

The wire format is one field per line, case-insensitive keywords,
whitespace-tolerant around punctuation:

    select: [City, Lineitem_Count]
    filters: [Gender='Male', Registration_Date>'2009']
    group_by: [City]
    order_by: [Lineitem_Count DESC]
    limit: 3

An empty filter list is written ``filters: []``. Values are single-quoted on
output; unquoted (bare) values are accepted on input. Any line that does not
start with a known keyword is preserved verbatim as a diagnostic, never an
error — the run policy decides what diagnostics mean.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass

from .errors import EmptyName, InvalidColumn, PmigError
from .fragments import FilterPredicate, OperatorFragment, OrderKey, normalize_column


class ParseErrorKind(enum.Enum):
    NO_RECOGNIZED_LINES = "NoRecognizedLines"
    MALFORMED_LIST = "MalformedList"
    BAD_OPERATOR = "BadOperator"
    UNTERMINATED_QUOTE = "UnterminatedQuote"
    BAD_LIMIT = "BadLimit"


class ParseError(PmigError):
    """Raised when a recognized line cannot be parsed, or nothing was recognized.

    ``snippet`` is always a substring of the line it points at.
    """

    def __init__(self, kind: ParseErrorKind, line_number: int, snippet: str):
        self.kind = kind
        self.line_number = line_number
        self.snippet = snippet
        super().__init__(f"{kind.value} at line {line_number}: {snippet!r}")


@dataclass(frozen=True, slots=True)
class InfoLine:
    """An unrecognized output line, kept verbatim in source order."""

    line_number: int
    text: str


@dataclass(frozen=True, slots=True)
class ParsedOutput:
    fragment: OperatorFragment
    diagnostics: tuple[InfoLine, ...]
    recognized_line_count: int


_KEYWORD_RE = re.compile(
    r"\s*(filters|group_by|order_by|limit|select)\s*:\s*(.*?)\s*$", re.IGNORECASE
)
_LIMIT_RE = re.compile(r"\d+\Z")
# Longest match first: two-character operators before their one-character prefixes.
_OPS_BY_LENGTH = ("!=", ">=", "<=", "=", ">", "<")
_OP_CHARS = frozenset("=!<>")


def _split_list(rest: str, line_number: int) -> list[str]:
    """Split a bracketed list body into raw elements, honoring quoted commas."""
    if not rest.startswith("["):
        raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, rest)
    in_quote = False
    close_idx = None
    for idx in range(1, len(rest)):
        ch = rest[idx]
        if ch == "'":
            in_quote = not in_quote
        elif ch == "]" and not in_quote:
            close_idx = idx
            break
    if in_quote:
        raise ParseError(ParseErrorKind.UNTERMINATED_QUOTE, line_number, rest)
    if close_idx is None:
        raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, rest)
    if rest[close_idx + 1 :].strip():
        raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, rest)
    body = rest[1:close_idx]
    if not body.strip():
        return []
    elements = []
    in_quote = False
    start = 0
    for idx, ch in enumerate(body):
        if ch == "'":
            in_quote = not in_quote
        elif ch == "," and not in_quote:
            elements.append(body[start:idx])
            start = idx + 1
    elements.append(body[start:])
    stripped = [el.strip() for el in elements]
    if any(not el for el in stripped):
        # Covers trailing commas and empty elements.
        raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, rest)
    return stripped


def _parse_predicate(element: str, line_number: int) -> FilterPredicate:
    op_positions = [i for i, ch in enumerate(element) if ch in _OP_CHARS]
    if not op_positions:
        raise ParseError(ParseErrorKind.BAD_OPERATOR, line_number, element)
    pos = op_positions[0]
    op = next((o for o in _OPS_BY_LENGTH if element.startswith(o, pos)), None)
    if op is None:
        # A lone "!" with no "=" after it.
        raise ParseError(ParseErrorKind.BAD_OPERATOR, line_number, element)
    try:
        column = normalize_column(element[:pos])
    except (EmptyName, InvalidColumn):
        raise ParseError(ParseErrorKind.BAD_OPERATOR, line_number, element) from None
    value_text = element[pos + len(op) :].strip()
    if not value_text:
        raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, element)
    if value_text[0] == "'":
        end = value_text.find("'", 1)
        if end == -1:
            raise ParseError(ParseErrorKind.UNTERMINATED_QUOTE, line_number, element)
        if value_text[end + 1 :].strip():
            raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, element)
        value = value_text[1:end]
    else:
        if any(ch in _OP_CHARS for ch in value_text):
            # A second operator in one predicate means the column and an
            # operator were fused into one token.
            raise ParseError(ParseErrorKind.BAD_OPERATOR, line_number, element)
        if "'" in value_text:
            raise ParseError(ParseErrorKind.UNTERMINATED_QUOTE, line_number, element)
        value = value_text
    return FilterPredicate(column, op, value)


def _parse_column(element: str, line_number: int) -> str:
    try:
        return normalize_column(element)
    except (EmptyName, InvalidColumn):
        raise ParseError(ParseErrorKind.MALFORMED_LIST, line_number, element) from None


def _parse_order_key(element: str, line_number: int) -> OrderKey:
    parts = element.split()
    if len(parts) >= 2 and parts[-1].upper() in ("ASC", "DESC"):
        column = _parse_column(" ".join(parts[:-1]), line_number)
        return OrderKey(column, parts[-1].upper())
    return OrderKey(_parse_column(element, line_number), "ASC")


def parse_output(text: str) -> ParsedOutput:
    """Parse raw model output into a fragment plus diagnostics.

    Raises ParseError on malformed recognized lines, and with kind
    NO_RECOGNIZED_LINES when no line matched any keyword. When the same
    keyword appears twice the last occurrence wins.
    """
    filters: tuple[FilterPredicate, ...] = ()
    group_by: tuple[str, ...] = ()
    order_by: tuple[OrderKey, ...] = ()
    select: tuple[str, ...] = ()
    limit: int | None = None
    diagnostics: list[InfoLine] = []
    recognized = 0

    for line_number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        match = _KEYWORD_RE.match(line)
        if match is None:
            diagnostics.append(InfoLine(line_number, line))
            continue
        keyword = match.group(1).lower()
        rest = match.group(2)
        if keyword == "limit":
            if not _LIMIT_RE.match(rest):
                raise ParseError(ParseErrorKind.BAD_LIMIT, line_number, rest)
            limit = int(rest)
        else:
            elements = _split_list(rest, line_number)
            if keyword == "filters":
                filters = tuple(_parse_predicate(el, line_number) for el in elements)
            elif keyword == "group_by":
                group_by = tuple(_parse_column(el, line_number) for el in elements)
            elif keyword == "order_by":
                order_by = tuple(_parse_order_key(el, line_number) for el in elements)
            else:
                select = tuple(_parse_column(el, line_number) for el in elements)
        recognized += 1

    if recognized == 0:
        raise ParseError(ParseErrorKind.NO_RECOGNIZED_LINES, 1, "")

    fragment = OperatorFragment(
        filters=filters, group_by=group_by, order_by=order_by, limit=limit, select=select
    )
    return ParsedOutput(fragment, tuple(diagnostics), recognized)


def serialize(fragment: OperatorFragment) -> str:
    """Serialize a canonical fragment, one line per non-empty field.

    Field order is fixed (select, filters, group_by, order_by, limit),
    values are always single-quoted, and a fully empty fragment serializes
    as ``filters: []``.
    """
    lines = []
    if fragment.select:
        lines.append("select: [" + ", ".join(fragment.select) + "]")
    if fragment.filters:
        body = ", ".join(f"{p.column}{p.op}'{p.value}'" for p in fragment.filters)
        lines.append(f"filters: [{body}]")
    if fragment.group_by:
        lines.append("group_by: [" + ", ".join(fragment.group_by) + "]")
    if fragment.order_by:
        body = ", ".join(f"{k.column} {k.direction}" for k in fragment.order_by)
        lines.append(f"order_by: [{body}]")
    if fragment.limit is not None:
        lines.append(f"limit: {fragment.limit}")
    if not lines:
        lines.append("filters: []")
    return "\n".join(lines)
