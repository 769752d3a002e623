"""Drift failure taxonomy and the deterministic corruptions that simulate it.

Each failure category has exactly one corruption rule that rewrites a
case's expected output into the characteristic wrong output for that
category. The rules are total functions of the fragment, so simulated model
behavior is reproducible byte for byte.
"""

from __future__ import annotations

import enum
from dataclasses import replace
from typing import Callable

from . import grammar
from .errors import InapplicableMode
from .fragments import COLUMN_PATTERN, FilterPredicate, OperatorFragment


class FailureCategory(enum.Enum):
    MISSING_ORDERING = "MissingOrdering"
    MISSING_GROUPING = "MissingGrouping"
    NONEXISTENT_COLUMN = "NonexistentColumn"
    SEMANTIC_MISINTERPRETATION = "SemanticMisinterpretation"
    MISSING_IMPLICIT_FILTER = "MissingImplicitFilter"
    COLUMN_VALUE_CONFUSION = "ColumnValueConfusion"
    COLUMN_SIMPLIFICATION = "ColumnSimplification"
    FORMAT_VIOLATION = "FormatViolation"
    INFO_MESSAGE_LEAK = "InfoMessageLeak"
    REDUNDANT_OPERATION = "RedundantOperation"
    OPERATOR_COLUMN_FUSION = "OperatorColumnFusion"


CATEGORY_BY_NAME = {category.value: category for category in FailureCategory}


def _date_like(column: str) -> bool:
    return "date" in column.lower()


def _semantic_candidate(fragment: OperatorFragment) -> str | None:
    if fragment.order_by:
        return fragment.order_by[0].column
    for column in fragment.columns():
        if _date_like(column):
            return column
    return None


def _rename_column(fragment: OperatorFragment, old: str, new: str) -> OperatorFragment:
    return OperatorFragment(
        filters=tuple(
            replace(p, column=new) if p.column == old else p for p in fragment.filters
        ),
        group_by=tuple(new if c == old else c for c in fragment.group_by),
        order_by=tuple(
            replace(k, column=new) if k.column == old else k for k in fragment.order_by
        ),
        limit=fragment.limit,
        select=tuple(new if c == old else c for c in fragment.select),
    )


def _drop_ordering(fragment: OperatorFragment) -> str | None:
    if not fragment.order_by:
        return None
    return grammar.serialize(replace(fragment, order_by=()))


def _drop_grouping(fragment: OperatorFragment) -> str | None:
    if not fragment.group_by:
        return None
    return grammar.serialize(replace(fragment, group_by=()))


def _invent_column(fragment: OperatorFragment) -> str | None:
    if not fragment.filters:
        return None
    first = fragment.filters[0]
    invented = replace(first, column=first.column + "_ID")
    return grammar.serialize(replace(fragment, filters=(invented,) + fragment.filters[1:]))


def _misread_semantics(fragment: OperatorFragment) -> str | None:
    if not fragment.filters:
        return None
    candidate = _semantic_candidate(fragment)
    if candidate is None:
        return None
    misread = FilterPredicate(candidate, ">", "2020")
    return grammar.serialize(replace(fragment, filters=(misread,) + fragment.filters[1:]))


def _drop_last_filter(fragment: OperatorFragment) -> str | None:
    if not fragment.filters:
        return None
    return grammar.serialize(replace(fragment, filters=fragment.filters[:-1]))


def _split_value(fragment: OperatorFragment) -> str | None:
    for index, pred in enumerate(fragment.filters):
        if "_" not in pred.value:
            continue
        left, right = pred.value.split("_", 1)
        if not COLUMN_PATTERN.match(left):
            continue
        confused = FilterPredicate(left, pred.op, right)
        filters = fragment.filters[:index] + (confused,) + fragment.filters[index + 1 :]
        return grammar.serialize(replace(fragment, filters=filters))
    return None


def _simplify_column(fragment: OperatorFragment) -> str | None:
    columns = fragment.columns()
    if not columns:
        return None
    longest = max(columns, key=len)
    tokens = longest.split("_")
    if len(tokens) < 2:
        return None
    truncated = "_".join(tokens[:-1])
    return grammar.serialize(_rename_column(fragment, longest, truncated))


def _break_format(fragment: OperatorFragment) -> str | None:
    if not fragment.filters:
        return None
    lines = grammar.serialize(fragment).splitlines()
    for index, line in enumerate(lines):
        if line.startswith("filters: ["):
            lines[index] = "filters: (" + line[len("filters: [") : -1] + ")"
            break
    return "\n".join(lines)


def _leak_info_message(fragment: OperatorFragment) -> str | None:
    columns = fragment.columns()
    if not columns:
        return None
    return f"could not find {columns[0]}\n" + grammar.serialize(fragment)


def _add_redundant_order(fragment: OperatorFragment) -> str | None:
    if fragment.order_by:
        return None
    if fragment.select:
        column = fragment.select[0]
    elif fragment.filters:
        column = fragment.filters[0].column
    else:
        return None
    return grammar.serialize(fragment) + f"\norder_by: [{column} ASC]"


def _fuse_operator_into_column(fragment: OperatorFragment) -> str | None:
    if not fragment.filters:
        return None
    first = fragment.filters[0]
    intact = f"{first.column}{first.op}'{first.value}'"
    fused = f"{first.column}>={first.op}'{first.value}'"
    return grammar.serialize(fragment).replace(intact, fused, 1)


_CORRUPTIONS: dict[FailureCategory, Callable[[OperatorFragment], str | None]] = {
    FailureCategory.MISSING_ORDERING: _drop_ordering,
    FailureCategory.MISSING_GROUPING: _drop_grouping,
    FailureCategory.NONEXISTENT_COLUMN: _invent_column,
    FailureCategory.SEMANTIC_MISINTERPRETATION: _misread_semantics,
    FailureCategory.MISSING_IMPLICIT_FILTER: _drop_last_filter,
    FailureCategory.COLUMN_VALUE_CONFUSION: _split_value,
    FailureCategory.COLUMN_SIMPLIFICATION: _simplify_column,
    FailureCategory.FORMAT_VIOLATION: _break_format,
    FailureCategory.INFO_MESSAGE_LEAK: _leak_info_message,
    FailureCategory.REDUNDANT_OPERATION: _add_redundant_order,
    FailureCategory.OPERATOR_COLUMN_FUSION: _fuse_operator_into_column,
}


def corrupt(mode: FailureCategory, fragment: OperatorFragment) -> str:
    """Produce the characteristic wrong output for a failure mode.

    Raises InapplicableMode when the fragment lacks the trait the mode
    needs (e.g. dropping an ORDER BY that is not there), or when the
    corruption would not change the serialized output.
    """
    output = _CORRUPTIONS[mode](fragment)
    if output is None or output == grammar.serialize(fragment):
        raise InapplicableMode(f"mode {mode.value} does not apply to this case")
    return output


def applicable(mode: FailureCategory, fragment: OperatorFragment) -> bool:
    try:
        corrupt(mode, fragment)
    except InapplicableMode:
        return False
    return True
