"""Shared fixtures and hypothesis strategies."""

from __future__ import annotations

import shutil
from pathlib import Path

import pytest
from hypothesis import strategies as st

from pmig import data
from pmig.fragments import (
    COMPARISON_OPS,
    FilterPredicate,
    OperatorFragment,
    OrderKey,
    SchemaContext,
    canonicalize,
)

# Values may hold anything the wire grammar can carry: no single quotes
# (the grammar has no escaping) and no newlines. Commas and brackets are
# legal inside quoted values and worth stressing.
_VALUE_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 _-.,:()[]#@"

identifiers = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,11}", fullmatch=True)
values = st.text(alphabet=_VALUE_ALPHABET, min_size=0, max_size=16)
predicates = st.builds(
    FilterPredicate,
    column=identifiers,
    op=st.sampled_from(COMPARISON_OPS),
    value=values,
)
order_keys = st.builds(OrderKey, column=identifiers, direction=st.sampled_from(("ASC", "DESC")))

fragments = st.builds(
    OperatorFragment,
    filters=st.lists(predicates, max_size=4).map(tuple),
    group_by=st.lists(identifiers, max_size=3).map(tuple),
    order_by=st.lists(order_keys, max_size=3).map(tuple),
    limit=st.one_of(st.none(), st.integers(min_value=0, max_value=9999)),
    select=st.lists(identifiers, max_size=3).map(tuple),
)
canonical_fragments = fragments.map(canonicalize)


def schema_for(*frags: OperatorFragment, extra: tuple[str, ...] = ()) -> SchemaContext:
    columns = {"Catchall_Column", *extra}
    for fragment in frags:
        columns.update(fragment.columns())
    return SchemaContext("generated", frozenset(columns))


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return data.path()


@pytest.fixture()
def legacy_prompts(tmp_path: Path) -> Path:
    """A writable copy of the bundled legacy prompt registry."""
    target = tmp_path / "prompts"
    shutil.copytree(data.path("prompts_legacy"), target)
    return target
