"""Tiered migration testbed: tagged corpus model, suite generation, persistence.

Suite generation is a pure function of (corpus, config). Easy cases are
chosen by operator coverage, moderate cases by provenance (variations of
selected easy cases, previously failed questions, cache/unit-test samples),
and hard cases by implicitness tags. Tiers never share a corpus entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

from . import grammar
from .errors import CorpusError, DuplicateCase, InsufficientCorpus
from .fragments import OperatorFragment, SchemaContext, canonicalize

OPERATORS = ("Filter", "GroupBy", "OrderBy", "Limit", "Select", "Aggregate")
IMPLICIT_MARKERS = ("implicit_column", "implicit_filter", "implicit_aggregation", "implicit_ordering")
SOURCES = ("production", "query_cache", "unit_test")
TIERS = ("easy", "moderate", "hard")

# The operator tags that easy-tier preference counts. Aggregate and Select
# have no bearing on easy eligibility.
_EASY_OPERATORS = ("Filter", "GroupBy", "OrderBy", "Limit")


@dataclass(frozen=True)
class CorpusEntry:
    """One tagged question from the workload corpus."""

    id: str
    question: str
    schema: SchemaContext
    expected: OperatorFragment
    operators_present: frozenset[str]
    source: str = "production"
    previously_failed: bool = False
    variation_of: str | None = None
    implicit_markers: frozenset[str] = frozenset()
    word_substituted: bool = False
    natural_phrasing: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "operators_present", frozenset(self.operators_present))
        object.__setattr__(self, "implicit_markers", frozenset(self.implicit_markers))
        unknown = self.operators_present - set(OPERATORS)
        if unknown:
            raise CorpusError(f"entry {self.id}: unknown operators {sorted(unknown)}")
        if self.source not in SOURCES:
            raise CorpusError(f"entry {self.id}: unknown source {self.source!r}")
        unknown_markers = self.implicit_markers - set(IMPLICIT_MARKERS)
        if unknown_markers:
            raise CorpusError(f"entry {self.id}: unknown markers {sorted(unknown_markers)}")
        # The operator tags must agree with the expected fragment; Aggregate
        # has no fragment field and is tag-only.
        checks = {
            "Filter": bool(self.expected.filters),
            "GroupBy": bool(self.expected.group_by),
            "OrderBy": bool(self.expected.order_by),
            "Limit": self.expected.limit is not None,
            "Select": bool(self.expected.select),
        }
        for name, present in checks.items():
            if (name in self.operators_present) != present:
                raise CorpusError(
                    f"entry {self.id}: operator tag {name} does not match the expected fragment"
                )


@dataclass(frozen=True, slots=True)
class TestCase:
    """One runnable case: question, schema, and the canonical expected fragment."""

    __test__ = False  # keep pytest from collecting this library type

    id: str
    tier: str
    question: str
    schema: SchemaContext
    expected: OperatorFragment
    source_entry: str

    def __post_init__(self) -> None:
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier: {self.tier!r}")


@dataclass(frozen=True, slots=True)
class Suite:
    """An ordered, tier-grouped collection of test cases."""

    name: str
    cases: tuple[TestCase, ...]
    generation_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "cases", tuple(self.cases))
        ids = [case.id for case in self.cases]
        if len(ids) != len(set(ids)):
            raise ValueError(f"suite {self.name!r} has duplicate case ids")

    @property
    def tier_counts(self) -> dict[str, int]:
        counts = {tier: 0 for tier in TIERS}
        for case in self.cases:
            counts[case.tier] += 1
        return counts

    def case(self, case_id: str) -> TestCase | None:
        for case in self.cases:
            if case.id == case_id:
                return case
        return None


def _easy_class(entry: CorpusEntry) -> int:
    return sum(1 for op in _EASY_OPERATORS if op in entry.operators_present)


def _names_of(entry: CorpusEntry) -> set[str]:
    names = set(entry.expected.columns())
    names.update(pred.value for pred in entry.expected.filters)
    return names


def _to_case(entry: CorpusEntry, tier: str) -> TestCase:
    return TestCase(
        id=entry.id,
        tier=tier,
        question=entry.question,
        schema=entry.schema,
        expected=canonicalize(entry.expected),
        source_entry=entry.id,
    )


def validate_corpus(entries: list[CorpusEntry]) -> None:
    ids = [entry.id for entry in entries]
    if len(ids) != len(set(ids)):
        raise CorpusError("corpus has duplicate entry ids")
    id_set = set(ids)
    for entry in entries:
        if entry.variation_of is not None and entry.variation_of not in id_set:
            raise CorpusError(f"entry {entry.id}: variation_of {entry.variation_of!r} does not exist")


def generate_testbed(
    corpus: list[CorpusEntry],
    easy_n: int = 40,
    moderate_n: int = 35,
    hard_n: int = 35,
    seed: int = 0,
    name: str = "migration-testbed",
) -> Suite:
    """Build the tiered testbed. Deterministic: a pure function of its inputs.

    Easy preference: entries with all four of Filter/GroupBy/OrderBy/Limit,
    then any two, then any one; within a class, greedily prefer the entry
    introducing the most column names and literal values not yet covered by
    the selection, then ascending id. Moderate preference: variations of
    selected easy entries, previously failed entries, then cache/unit-test
    samples. Hard preference: implicit markers, word substitution, natural
    phrasing. An entry lands in at most one tier.
    """
    validate_corpus(corpus)
    used: set[str] = set()

    eligible_easy = [e for e in corpus if _easy_class(e) in (4, 2, 1)]
    if len(eligible_easy) < easy_n:
        raise InsufficientCorpus("easy", easy_n, len(eligible_easy))
    easy: list[CorpusEntry] = []
    covered: set[str] = set()
    for cls in (4, 2, 1):
        pool = [e for e in eligible_easy if _easy_class(e) == cls]
        while pool and len(easy) < easy_n:
            best = min(pool, key=lambda e: (-len(_names_of(e) - covered), e.id))
            pool.remove(best)
            easy.append(best)
            used.add(best.id)
            covered |= _names_of(best)
        if len(easy) == easy_n:
            break

    easy_ids = {entry.id for entry in easy}
    moderate: list[CorpusEntry] = []
    for pool_filter in (
        lambda e: e.variation_of in easy_ids,
        lambda e: e.previously_failed,
        lambda e: e.source in ("query_cache", "unit_test"),
    ):
        pool = sorted(
            (e for e in corpus if e.id not in used and pool_filter(e)), key=lambda e: e.id
        )
        for entry in pool:
            if len(moderate) == moderate_n:
                break
            moderate.append(entry)
            used.add(entry.id)
    if len(moderate) < moderate_n:
        raise InsufficientCorpus("moderate", moderate_n, len(moderate))

    hard: list[CorpusEntry] = []
    for pool_filter in (
        lambda e: bool(e.implicit_markers),
        lambda e: e.word_substituted,
        lambda e: e.natural_phrasing,
    ):
        pool = sorted(
            (e for e in corpus if e.id not in used and pool_filter(e)), key=lambda e: e.id
        )
        for entry in pool:
            if len(hard) == hard_n:
                break
            hard.append(entry)
            used.add(entry.id)
    if len(hard) < hard_n:
        raise InsufficientCorpus("hard", hard_n, len(hard))

    cases = [
        *(_to_case(e, "easy") for e in sorted(easy, key=lambda e: e.id)),
        *(_to_case(e, "moderate") for e in sorted(moderate, key=lambda e: e.id)),
        *(_to_case(e, "hard") for e in sorted(hard, key=lambda e: e.id)),
    ]
    return Suite(name=name, cases=tuple(cases), generation_seed=seed)


def extend_suite(suite: Suite, case: TestCase) -> Suite:
    """Append a case at the end of its tier block."""
    if suite.case(case.id) is not None:
        raise DuplicateCase(f"case {case.id!r} is already in suite {suite.name!r}")
    tier_rank = {tier: rank for rank, tier in enumerate(TIERS)}
    insert_at = len(suite.cases)
    for index, existing in enumerate(suite.cases):
        if tier_rank[existing.tier] > tier_rank[case.tier]:
            insert_at = index
            break
    cases = suite.cases[:insert_at] + (case,) + suite.cases[insert_at:]
    return replace(suite, cases=cases)


# ---------------------------------------------------------------------------
# Persistence. Suites and corpora are stored as JSON documents; the expected
# fragment is embedded as its canonical text serialization.


def _schema_to_json(schema: SchemaContext) -> dict:
    doc: dict = {"table": schema.table, "columns": sorted(schema.columns)}
    if schema.column_descriptions:
        doc["column_descriptions"] = dict(sorted(schema.column_descriptions.items()))
    return doc


def _schema_from_json(doc: dict) -> SchemaContext:
    return SchemaContext(
        table=doc["table"],
        columns=frozenset(doc["columns"]),
        column_descriptions=doc.get("column_descriptions", {}),
    )


def _expected_from_text(text: str) -> OperatorFragment:
    return canonicalize(grammar.parse_output(text).fragment)


def suite_to_json(suite: Suite) -> dict:
    return {
        "name": suite.name,
        "seed": suite.generation_seed,
        "cases": [
            {
                "id": case.id,
                "tier": case.tier,
                "question": case.question,
                "schema": _schema_to_json(case.schema),
                "expected": grammar.serialize(case.expected),
                "source_entry": case.source_entry,
            }
            for case in suite.cases
        ],
    }


def suite_from_json(doc: dict) -> Suite:
    cases = tuple(
        TestCase(
            id=case["id"],
            tier=case["tier"],
            question=case["question"],
            schema=_schema_from_json(case["schema"]),
            expected=_expected_from_text(case["expected"]),
            source_entry=case.get("source_entry", case["id"]),
        )
        for case in doc["cases"]
    )
    return Suite(name=doc["name"], cases=cases, generation_seed=doc.get("seed", 0))


def save_suite(suite: Suite, path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(suite_to_json(suite), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_suite(path: Path | str) -> Suite:
    return suite_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def corpus_to_json(entries: list[CorpusEntry]) -> dict:
    return {
        "entries": [
            {
                "id": entry.id,
                "question": entry.question,
                "schema": _schema_to_json(entry.schema),
                "expected": grammar.serialize(canonicalize(entry.expected)),
                "operators_present": sorted(entry.operators_present),
                "source": entry.source,
                "previously_failed": entry.previously_failed,
                "variation_of": entry.variation_of,
                "implicit_markers": sorted(entry.implicit_markers),
                "word_substituted": entry.word_substituted,
                "natural_phrasing": entry.natural_phrasing,
            }
            for entry in entries
        ]
    }


def corpus_from_json(doc: dict) -> list[CorpusEntry]:
    entries = [
        CorpusEntry(
            id=item["id"],
            question=item["question"],
            schema=_schema_from_json(item["schema"]),
            expected=_expected_from_text(item["expected"]),
            operators_present=frozenset(item["operators_present"]),
            source=item.get("source", "production"),
            previously_failed=item.get("previously_failed", False),
            variation_of=item.get("variation_of"),
            implicit_markers=frozenset(item.get("implicit_markers", [])),
            word_substituted=item.get("word_substituted", False),
            natural_phrasing=item.get("natural_phrasing", False),
        )
        for item in doc["entries"]
    ]
    validate_corpus(entries)
    return entries


def save_corpus(entries: list[CorpusEntry], path: Path | str) -> None:
    Path(path).write_text(
        json.dumps(corpus_to_json(entries), indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )


def load_corpus(path: Path | str) -> list[CorpusEntry]:
    return corpus_from_json(json.loads(Path(path).read_text(encoding="utf-8")))
