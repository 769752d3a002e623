"""Fragment model: column normalization, canonical form, and comparison."""

from __future__ import annotations

import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmig.errors import EmptyName, InvalidColumn
from pmig.fragments import (
    FilterPredicate,
    OperatorFragment,
    OrderKey,
    SchemaContext,
    canonicalize,
    compare,
    normalize_column,
    schema_text,
)

from conftest import canonical_fragments, fragments, schema_for


class TestNormalizeColumn:
    def test_spaces_become_underscores(self):
        assert normalize_column("Registration Date") == "Registration_Date"

    def test_identity_on_normalized_input(self):
        assert normalize_column("TIMES_LATE") == "TIMES_LATE"

    def test_quoted_with_space_run(self):
        # By the stated rules: strip the surrounding quotes, then collapse
        # the double space into a single underscore.
        assert normalize_column("'Detailed  Remarks'") == "Detailed_Remarks"

    def test_case_is_preserved(self):
        assert normalize_column("Birth city") == "Birth_city"

    @pytest.mark.parametrize("raw", ["", "   ", "\t"])
    def test_empty_raises(self, raw):
        with pytest.raises(EmptyName):
            normalize_column(raw)

    def test_quotes_only_raises(self):
        with pytest.raises(EmptyName):
            normalize_column("''")

    @pytest.mark.parametrize("raw", ["123abc", "a-b", "City!"])
    def test_non_identifier_raises(self, raw):
        with pytest.raises(InvalidColumn):
            normalize_column(raw)

    @given(st.from_regex(r"['\"]?[A-Za-z_][A-Za-z0-9_ ]{0,10}['\"]?", fullmatch=True))
    def test_idempotent(self, raw):
        try:
            once = normalize_column(raw)
        except (EmptyName, InvalidColumn):
            return
        assert normalize_column(once) == once


class TestTypes:
    def test_bad_operator_rejected(self):
        with pytest.raises(ValueError):
            FilterPredicate("A", "<>", "1")

    def test_quote_in_value_rejected(self):
        with pytest.raises(ValueError):
            FilterPredicate("A", "=", "O'Brien")

    def test_bad_direction_rejected(self):
        with pytest.raises(ValueError):
            OrderKey("A", "UP")

    def test_negative_limit_rejected(self):
        with pytest.raises(ValueError):
            OperatorFragment(limit=-1)

    def test_empty_fragment_equals_itself(self):
        assert OperatorFragment() == OperatorFragment()
        assert OperatorFragment().is_empty

    def test_schema_requires_columns(self):
        with pytest.raises(ValueError):
            SchemaContext("t", frozenset())

    def test_schema_text_is_sorted(self):
        schema = SchemaContext("orders", frozenset({"City", "Order_Date"}))
        assert schema_text(schema) == "table orders with columns: City, Order_Date"


class TestCanonicalize:
    def test_sorts_filters(self):
        fragment = OperatorFragment(
            filters=(FilterPredicate("B", "=", "2"), FilterPredicate("A", "=", "1"))
        )
        assert canonicalize(fragment).filters == (
            FilterPredicate("A", "=", "1"),
            FilterPredicate("B", "=", "2"),
        )

    def test_all_permutations_of_example_three_agree(self):
        # Every ordering of the SSN/date predicates must canonicalize
        # identically; enumerate them all.
        preds = (
            FilterPredicate("SSN", "!=", "157549937"),
            FilterPredicate("SSN", "!=", "155485548"),
            FilterPredicate("Registration_Date", ">=", "2018"),
            FilterPredicate("Registration_Date", "<=", "2009"),
        )
        canonical = {
            canonicalize(OperatorFragment(filters=perm))
            for perm in itertools.permutations(preds)
        }
        assert len(canonical) == 1

    @given(fragments)
    def test_idempotent(self, fragment):
        once = canonicalize(fragment)
        assert canonicalize(once) == once

    @given(fragments)
    def test_preserves_semantics(self, fragment):
        canonical = canonicalize(fragment)
        assert sorted(canonical.filters, key=FilterPredicate.sort_key) == sorted(
            fragment.filters, key=FilterPredicate.sort_key
        )
        assert canonical.group_by == fragment.group_by
        assert canonical.order_by == fragment.order_by
        assert canonical.select == fragment.select
        assert canonical.limit == fragment.limit


class TestCompare:
    def test_identical_fragments_empty_diff(self):
        fragment = canonicalize(
            OperatorFragment(filters=(FilterPredicate("Gender", "=", "Male"),), limit=3)
        )
        assert compare(fragment, fragment, schema_for(fragment)).empty

    def test_missing_order_by(self):
        expected = OperatorFragment(order_by=(OrderKey("Month", "ASC"),))
        actual = OperatorFragment()
        diff = compare(expected, actual, schema_for(expected))
        assert diff.missing_order_by == (OrderKey("Month", "ASC"),)
        assert not diff.empty

    def test_column_not_in_schema_is_flagged(self):
        schema = SchemaContext("employees", frozenset({"TIMES_LATE", "Department"}))
        expected = canonicalize(OperatorFragment(filters=(FilterPredicate("TIMES_LATE", ">", "3"),)))
        actual = canonicalize(OperatorFragment(filters=(FilterPredicate("TIME_LATE", ">", "3"),)))
        diff = compare(expected, actual, schema)
        assert diff.unknown_columns == ("TIME_LATE",)

    def test_limit_mismatch(self):
        diff = compare(
            OperatorFragment(limit=3),
            OperatorFragment(limit=5),
            schema_for(OperatorFragment()),
        )
        assert diff.limit_mismatch == (3, 5)

    def test_reordered_sequences_are_not_equal(self):
        expected = OperatorFragment(group_by=("A", "B"))
        actual = OperatorFragment(group_by=("B", "A"))
        diff = compare(expected, actual, schema_for(expected))
        assert diff.reordered == ("group_by",)
        assert not diff.empty

    @given(canonical_fragments)
    def test_reflexive(self, fragment):
        assert compare(fragment, fragment, schema_for(fragment)).empty

    @given(canonical_fragments, canonical_fragments)
    def test_symmetric_up_to_relabeling(self, a, b):
        schema = schema_for(a, b)
        forward = compare(a, b, schema)
        backward = compare(b, a, schema)
        assert sorted(forward.missing_filters, key=FilterPredicate.sort_key) == sorted(
            backward.extra_filters, key=FilterPredicate.sort_key
        )
        assert sorted(forward.extra_filters, key=FilterPredicate.sort_key) == sorted(
            backward.missing_filters, key=FilterPredicate.sort_key
        )
        assert forward.missing_group_by == backward.extra_group_by
        assert forward.extra_group_by == backward.missing_group_by
        assert forward.empty == backward.empty

    @given(canonical_fragments, st.randoms(use_true_random=False))
    def test_filter_permutation_is_empty_diff(self, fragment, rng):
        permuted_filters = list(fragment.filters)
        rng.shuffle(permuted_filters)
        permuted = OperatorFragment(
            filters=tuple(permuted_filters),
            group_by=fragment.group_by,
            order_by=fragment.order_by,
            limit=fragment.limit,
            select=fragment.select,
        )
        assert compare(fragment, permuted, schema_for(fragment)).empty

    @given(canonical_fragments, canonical_fragments)
    def test_empty_diff_iff_equal(self, a, b):
        schema = schema_for(a, b)
        assert compare(a, b, schema).empty == (a == b)
