"""Canonical model of extracted SQL operator fragments and their comparison.

A fragment holds the structured content pulled out of a natural-language
question: filter predicates, grouping, ordering, a row limit, and selected
columns. Filters compare as a multiset; the other list fields are
order-sensitive. All types are immutable values.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Mapping

from .errors import EmptyName, InvalidColumn

COLUMN_PATTERN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
COMPARISON_OPS = ("=", "!=", ">", ">=", "<", "<=")

_QUOTE_CHARS = ("'", '"')


def normalize_column(raw: str) -> str:
    """Normalize a raw column token into an identifier.

    Strips surrounding quotes, collapses whitespace runs to single
    underscores, and preserves character case. Idempotent.
    """
    name = raw.strip()
    if not name:
        raise EmptyName("column name is empty")
    while len(name) >= 2 and name[0] == name[-1] and name[0] in _QUOTE_CHARS:
        name = name[1:-1].strip()
        if not name:
            raise EmptyName(f"column name is empty after unquoting: {raw!r}")
    name = "_".join(name.split())
    if not COLUMN_PATTERN.match(name):
        raise InvalidColumn(f"not a valid column identifier: {raw!r}")
    return name


def _check_column(name: str) -> None:
    if not COLUMN_PATTERN.match(name):
        raise InvalidColumn(f"not a normalized column identifier: {name!r}")


@dataclass(frozen=True, slots=True)
class FilterPredicate:
    """One comparison against a column, e.g. Gender = 'Male'.

    The value is the quote-stripped literal text, preserved byte for byte.
    Single quotes and newlines cannot occur in values because the wire
    grammar has no escaping for them.
    """

    column: str
    op: str
    value: str

    def __post_init__(self) -> None:
        _check_column(self.column)
        if self.op not in COMPARISON_OPS:
            raise ValueError(f"unsupported comparison operator: {self.op!r}")
        if "'" in self.value or "\n" in self.value:
            raise ValueError(f"filter value cannot contain quotes or newlines: {self.value!r}")

    def sort_key(self) -> tuple[str, str, str]:
        return (self.column, self.op, self.value)


@dataclass(frozen=True, slots=True)
class OrderKey:
    """One ORDER BY entry. Direction defaults to ASC."""

    column: str
    direction: str = "ASC"

    def __post_init__(self) -> None:
        _check_column(self.column)
        if self.direction not in ("ASC", "DESC"):
            raise ValueError(f"invalid sort direction: {self.direction!r}")


@dataclass(frozen=True, slots=True)
class OperatorFragment:
    """The operator content extracted from one question.

    Filters are a multiset; group_by, order_by, and select are
    order-sensitive sequences. An all-empty fragment is valid.
    """

    filters: tuple[FilterPredicate, ...] = ()
    group_by: tuple[str, ...] = ()
    order_by: tuple[OrderKey, ...] = ()
    limit: int | None = None
    select: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "filters", tuple(self.filters))
        object.__setattr__(self, "group_by", tuple(self.group_by))
        object.__setattr__(self, "order_by", tuple(self.order_by))
        object.__setattr__(self, "select", tuple(self.select))
        for col in (*self.group_by, *self.select):
            _check_column(col)
        if self.limit is not None and self.limit < 0:
            raise ValueError(f"limit must be non-negative, got {self.limit}")

    @property
    def is_empty(self) -> bool:
        return not (self.filters or self.group_by or self.order_by or self.select) and self.limit is None

    def columns(self) -> tuple[str, ...]:
        """All referenced columns, deduplicated, in field-scan order
        (select, filters, group_by, order_by)."""
        seen: dict[str, None] = {}
        for col in self.select:
            seen.setdefault(col)
        for pred in self.filters:
            seen.setdefault(pred.column)
        for col in self.group_by:
            seen.setdefault(col)
        for key in self.order_by:
            seen.setdefault(key.column)
        return tuple(seen)


@dataclass(frozen=True)
class SchemaContext:
    """The table a question runs against, used to detect invented columns."""

    table: str
    columns: frozenset[str]
    column_descriptions: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", frozenset(self.columns))
        if not self.columns:
            raise ValueError("schema must declare at least one column")
        for col in self.columns:
            _check_column(col)


def schema_text(schema: SchemaContext) -> str:
    """Render a schema for prompt bindings. Columns are sorted for determinism."""
    return f"table {schema.table} with columns: " + ", ".join(sorted(schema.columns))


@dataclass(frozen=True, slots=True)
class DiffSet:
    """Field-by-field differences between an expected and an actual fragment.

    Empty if and only if the fragments are equal. For the ordered fields a
    pure reordering is reported via `reordered` rather than missing/extra.
    `unknown_columns` lists actual columns that are neither in the schema nor
    anywhere in the expected fragment.
    """

    missing_filters: tuple[FilterPredicate, ...] = ()
    extra_filters: tuple[FilterPredicate, ...] = ()
    missing_group_by: tuple[str, ...] = ()
    extra_group_by: tuple[str, ...] = ()
    missing_order_by: tuple[OrderKey, ...] = ()
    extra_order_by: tuple[OrderKey, ...] = ()
    missing_select: tuple[str, ...] = ()
    extra_select: tuple[str, ...] = ()
    reordered: tuple[str, ...] = ()
    limit_mismatch: tuple[int | None, int | None] | None = None
    unknown_columns: tuple[str, ...] = ()

    @property
    def empty(self) -> bool:
        return not (
            self.missing_filters
            or self.extra_filters
            or self.missing_group_by
            or self.extra_group_by
            or self.missing_order_by
            or self.extra_order_by
            or self.missing_select
            or self.extra_select
            or self.reordered
            or self.limit_mismatch
            or self.unknown_columns
        )

    def summary(self) -> str:
        parts = []
        if self.missing_filters:
            parts.append("missing filters: " + ", ".join(f"{p.column}{p.op}'{p.value}'" for p in self.missing_filters))
        if self.extra_filters:
            parts.append("extra filters: " + ", ".join(f"{p.column}{p.op}'{p.value}'" for p in self.extra_filters))
        if self.missing_group_by:
            parts.append("missing group_by: " + ", ".join(self.missing_group_by))
        if self.extra_group_by:
            parts.append("extra group_by: " + ", ".join(self.extra_group_by))
        if self.missing_order_by:
            parts.append("missing order_by: " + ", ".join(f"{k.column} {k.direction}" for k in self.missing_order_by))
        if self.extra_order_by:
            parts.append("extra order_by: " + ", ".join(f"{k.column} {k.direction}" for k in self.extra_order_by))
        if self.missing_select:
            parts.append("missing select: " + ", ".join(self.missing_select))
        if self.extra_select:
            parts.append("extra select: " + ", ".join(self.extra_select))
        if self.reordered:
            parts.append("reordered: " + ", ".join(self.reordered))
        if self.limit_mismatch:
            parts.append(f"limit: expected {self.limit_mismatch[0]}, got {self.limit_mismatch[1]}")
        if self.unknown_columns:
            parts.append("columns not in schema: " + ", ".join(self.unknown_columns))
        return "; ".join(parts) if parts else "no differences"


def canonicalize(fragment: OperatorFragment) -> OperatorFragment:
    """Sort filters by (column, op, value); everything else is untouched.

    Column tokens are normalized at construction time, so canonical form is
    purely a filter ordering. Idempotent.
    """
    return replace(fragment, filters=tuple(sorted(fragment.filters, key=FilterPredicate.sort_key)))


def _multiset_diff(expected: tuple, actual: tuple) -> tuple[tuple, tuple]:
    missing = Counter(expected) - Counter(actual)
    extra = Counter(actual) - Counter(expected)
    missing_seq = []
    for item in expected:
        if missing[item] > 0:
            missing[item] -= 1
            missing_seq.append(item)
    extra_seq = []
    for item in actual:
        if extra[item] > 0:
            extra[item] -= 1
            extra_seq.append(item)
    return tuple(missing_seq), tuple(extra_seq)


def compare(expected: OperatorFragment, actual: OperatorFragment, schema: SchemaContext) -> DiffSet:
    """Diff two fragments against a schema.

    Both fragments should be canonical; filters are multiset-compared either
    way. The result is empty exactly when the fragments are equal, so
    compare(f, f, schema) is empty for every fragment.
    """
    missing_filters, extra_filters = _multiset_diff(expected.filters, actual.filters)

    reordered = []
    ordered_diffs = {}
    for name, exp_seq, act_seq in (
        ("group_by", expected.group_by, actual.group_by),
        ("order_by", expected.order_by, actual.order_by),
        ("select", expected.select, actual.select),
    ):
        if exp_seq == act_seq:
            ordered_diffs[name] = ((), ())
            continue
        missing, extra = _multiset_diff(exp_seq, act_seq)
        if not missing and not extra:
            reordered.append(name)
        ordered_diffs[name] = (missing, extra)

    limit_mismatch = None
    if expected.limit != actual.limit:
        limit_mismatch = (expected.limit, actual.limit)

    expected_cols = set(expected.columns())
    unknown = tuple(
        col for col in actual.columns() if col not in schema.columns and col not in expected_cols
    )

    return DiffSet(
        missing_filters=missing_filters,
        extra_filters=extra_filters,
        missing_group_by=ordered_diffs["group_by"][0],
        extra_group_by=ordered_diffs["group_by"][1],
        missing_order_by=ordered_diffs["order_by"][0],
        extra_order_by=ordered_diffs["order_by"][1],
        missing_select=ordered_diffs["select"][0],
        extra_select=ordered_diffs["select"][1],
        reordered=tuple(reordered),
        limit_mismatch=limit_mismatch,
        unknown_columns=unknown,
    )
