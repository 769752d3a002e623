"""Suite execution, verdicts, failure categorization, and the migration loop.

run_suite() renders a prompt per case, calls the provider, parses and diffs
the output, and assigns exactly one failure category per failing case via a
fixed precedence. migrate() drives the five-step loop: run the testbed, fix
the prompts for failing tasks using category hints, repeat until the testbed
is clean, then hold the regression gate; gate failures extend the testbed
and restart.
"""

from __future__ import annotations

import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from . import prompts
from .drift import FailureCategory
from .errors import NotAFailure, ProviderError
from .fragments import DiffSet, OperatorFragment, SchemaContext, canonicalize, compare, schema_text
from .grammar import ParsedOutput, ParseError, ParseErrorKind, parse_output
from .prompts import ExampleBlock, PromptSection, PromptTemplate, Registry, lint, render
from .providers import ChatRequest, Message, Provider, Usage
from .testbed import Suite, TestCase, extend_suite

DEFAULT_TASK = "filter_extract"

_FUSED_COLUMN_RE = re.compile(
    r"\s*['\"]?[A-Za-z_][A-Za-z0-9_]*['\"]?\s*(?:>=|<=|!=|=|>|<)\s*(?:>=|<=|!=|=|>|<)"
)


def _is_truncation(actual: str, expected: str) -> bool:
    """True when `actual` is `expected` with one or more trailing
    underscore-delimited tokens dropped."""
    tokens = expected.split("_")
    return any("_".join(tokens[:k]) == actual for k in range(1, len(tokens)))


def categorize(
    expected: OperatorFragment,
    actual: ParsedOutput | ParseError,
    schema: SchemaContext,
) -> FailureCategory:
    """Assign the single failure category for a failed case.

    Precedence: parse errors (fused-operator errors first), leaked info
    lines, missing/extra ordering and grouping, schema-breaking column
    rewrites, dropped filters, and finally semantic misinterpretation.
    Raises NotAFailure when the output actually matches.
    """
    if isinstance(actual, ParseError):
        if actual.kind is ParseErrorKind.BAD_OPERATOR and _FUSED_COLUMN_RE.match(actual.snippet):
            return FailureCategory.OPERATOR_COLUMN_FUSION
        return FailureCategory.FORMAT_VIOLATION

    fragment = canonicalize(actual.fragment)
    diff = compare(expected, fragment, schema)
    if diff.empty and not actual.diagnostics:
        raise NotAFailure("the output matches the expected fragment")

    if actual.diagnostics:
        return FailureCategory.INFO_MESSAGE_LEAK
    if not fragment.order_by and expected.order_by:
        return FailureCategory.MISSING_ORDERING
    if not fragment.group_by and expected.group_by:
        return FailureCategory.MISSING_GROUPING
    if fragment.order_by and not expected.order_by:
        return FailureCategory.REDUNDANT_OPERATION

    expected_columns = set(expected.columns())
    expected_values = [p.value for p in expected.filters]
    unknown = [c for c in fragment.columns() if c not in schema.columns]
    for column in unknown:
        if any(_is_truncation(column, e) for e in expected_columns):
            return FailureCategory.COLUMN_SIMPLIFICATION
    value_prefixes = {v.split("_", 1)[0] for v in expected_values if "_" in v}
    if any(p.column in value_prefixes for p in fragment.filters):
        return FailureCategory.COLUMN_VALUE_CONFUSION
    if unknown:
        return FailureCategory.NONEXISTENT_COLUMN
    if diff.missing_filters and not diff.extra_filters:
        return FailureCategory.MISSING_IMPLICIT_FILTER
    return FailureCategory.SEMANTIC_MISINTERPRETATION


# ---------------------------------------------------------------------------
# Reports


@dataclass(frozen=True, slots=True)
class CaseResult:
    case_id: str
    raw_output: str
    parsed: ParsedOutput | ParseError | None
    passed: bool
    category: FailureCategory | None
    diff: DiffSet | None
    usage: Usage

    def __post_init__(self) -> None:
        if self.passed == (self.category is not None):
            raise ValueError("failed cases carry exactly one category, passing cases none")


@dataclass(frozen=True, slots=True)
class UsageTotals:
    calls: int
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True, slots=True)
class RunReport:
    suite: str
    model_tag: str
    prompt_versions: Mapping[str, int]
    results: tuple[CaseResult, ...]
    pass_rate: float
    category_histogram: Mapping[str, int]
    total_usage: UsageTotals

    def failed_case_ids(self) -> tuple[str, ...]:
        return tuple(r.case_id for r in self.results if not r.passed)


def round_percentage(passed: int, total: int) -> float:
    """Round-half-up to one decimal, so 146/150 reports as 97.3."""
    if total == 0:
        return 100.0
    ratio = Decimal(passed * 100) / Decimal(total)
    return float(ratio.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def _assemble_report(
    suite: Suite, model_tag: str, prompt_versions: dict[str, int], results: Sequence[CaseResult]
) -> RunReport:
    passed = sum(1 for r in results if r.passed)
    histogram = Counter(r.category.value for r in results if r.category is not None)
    ordered_histogram = {
        category.value: histogram[category.value]
        for category in FailureCategory
        if histogram[category.value]
    }
    totals = UsageTotals(
        calls=len(results),
        input_tokens=sum(r.usage.input_tokens for r in results),
        output_tokens=sum(r.usage.output_tokens for r in results),
    )
    return RunReport(
        suite=suite.name,
        model_tag=model_tag,
        prompt_versions=dict(prompt_versions),
        results=tuple(results),
        pass_rate=round_percentage(passed, len(results)),
        category_histogram=ordered_histogram,
        total_usage=totals,
    )


def run_suite(
    provider: Provider,
    registry: Registry,
    suite: Suite,
    model_tag: str,
    parallelism: int = 1,
    task: str = DEFAULT_TASK,
    strict: bool = True,
) -> RunReport:
    """Run every case and assemble a report in suite order.

    Cases may complete concurrently up to `parallelism`; results are
    collected back into suite order before any aggregation, so reports are
    identical across parallelism settings. In strict mode diagnostics fail a
    case; with strict=False a case whose only defect is diagnostic lines
    passes.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    template = registry.get(task, model_tag)

    def run_case(case: TestCase) -> CaseResult:
        bindings = {
            "question": case.question,
            "user_question": case.question,
            "schema": schema_text(case.schema),
            "context": schema_text(case.schema),
            "external_context": "",
        }
        prompt_text = render(template, bindings)
        request = ChatRequest(
            model_tag=model_tag,
            messages=(Message("user", prompt_text),),
            temperature=0.0,
            case_ref=case.id,
        )
        try:
            response = provider.complete(request)
        except ProviderError as exc:
            return CaseResult(
                case_id=case.id,
                raw_output=f"<provider error: {exc}>",
                parsed=None,
                passed=False,
                category=FailureCategory.FORMAT_VIOLATION,
                diff=None,
                usage=Usage(0, 0),
            )
        try:
            parsed = parse_output(response.content)
        except ParseError as exc:
            return CaseResult(
                case_id=case.id,
                raw_output=response.content,
                parsed=exc,
                passed=False,
                category=categorize(case.expected, exc, case.schema),
                diff=None,
                usage=response.usage,
            )
        fragment = canonicalize(parsed.fragment)
        diff = compare(case.expected, fragment, case.schema)
        passed = diff.empty and (not parsed.diagnostics or not strict)
        category = None
        if not passed:
            category = categorize(case.expected, parsed, case.schema)
        return CaseResult(
            case_id=case.id,
            raw_output=response.content,
            parsed=parsed,
            passed=passed,
            category=category,
            diff=diff,
            usage=response.usage,
        )

    if parallelism == 1:
        results = [run_case(case) for case in suite.cases]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(run_case, suite.cases))

    return _assemble_report(suite, model_tag, {task: template.version}, results)


@dataclass(frozen=True, slots=True)
class GateResult:
    passed: bool
    failed_case_ids: tuple[str, ...]


def regression_gate(report: RunReport, threshold: float = 100.0) -> GateResult:
    """Pass exactly when the report's pass rate reaches the threshold."""
    if report.pass_rate >= threshold:
        return GateResult(True, ())
    return GateResult(False, report.failed_case_ids())


# ---------------------------------------------------------------------------
# Hints: each failure category recommends one prompt feature to add.

MIN_EXAMPLES = 3

FEATURE_FOR_CATEGORY: dict[FailureCategory, str] = {
    FailureCategory.MISSING_ORDERING: "has_formatting_rules",
    FailureCategory.MISSING_GROUPING: "has_formatting_rules",
    FailureCategory.NONEXISTENT_COLUMN: "example_count",
    FailureCategory.SEMANTIC_MISINTERPRETATION: "has_reasoning_section",
    FailureCategory.MISSING_IMPLICIT_FILTER: "has_implicit_inference_rule",
    FailureCategory.COLUMN_VALUE_CONFUSION: "has_underscore_rule",
    FailureCategory.COLUMN_SIMPLIFICATION: "has_final_step_by_step",
    FailureCategory.FORMAT_VIOLATION: "has_explicit_output_format",
    FailureCategory.INFO_MESSAGE_LEAK: "has_empty_list_rule",
    FailureCategory.REDUNDANT_OPERATION: "has_final_step_by_step",
    FailureCategory.OPERATOR_COLUMN_FUSION: "has_no_quote_rule",
}

_HINT_TEXT: dict[FailureCategory, str] = {
    FailureCategory.MISSING_ORDERING: "add explicit rule: include ORDER BY for time/trend questions",
    FailureCategory.MISSING_GROUPING: "add explicit rule: include GROUP BY when aggregating per category",
    FailureCategory.NONEXISTENT_COLUMN: f"add worked examples grounding column names in the schema, at least {MIN_EXAMPLES}",
    FailureCategory.SEMANTIC_MISINTERPRETATION: "add a reasoning section with a query analysis strategy",
    FailureCategory.MISSING_IMPLICIT_FILTER: "add rule: infer implicit columns/filters",
    FailureCategory.COLUMN_VALUE_CONFUSION: "add rule: use underscores for column names instead of spaces",
    FailureCategory.COLUMN_SIMPLIFICATION: "add final instruction: think step by step and verify column names against the schema",
    FailureCategory.FORMAT_VIOLATION: "add explicit output_format section",
    FailureCategory.INFO_MESSAGE_LEAK: "add rule: if there are no filters, return as filters: []",
    FailureCategory.REDUNDANT_OPERATION: "add final instruction: think step by step; do not add operations the question does not ask for",
    FailureCategory.OPERATOR_COLUMN_FUSION: "add rule: do not quote column names",
}


def hint(category: FailureCategory) -> str:
    """The fixed feature-addition recommendation for a failure category."""
    feature = FEATURE_FOR_CATEGORY[category]
    requirement = f"example_count>={MIN_EXAMPLES}" if feature == "example_count" else feature
    return f"{_HINT_TEXT[category]} ({requirement})"


def feature_satisfied(features: prompts.PromptFeatureSet, feature: str) -> bool:
    if feature == "example_count":
        return features.example_count >= MIN_EXAMPLES
    return bool(getattr(features, feature))


# ---------------------------------------------------------------------------
# Prompt fixers

_RULE_FEATURES = frozenset(
    {
        "has_formatting_rules",
        "has_underscore_rule",
        "has_no_quote_rule",
        "has_empty_list_rule",
        "has_implicit_inference_rule",
    }
)

_SECTION_FOR_FEATURE = {
    "has_explicit_output_format": "output_format",
    "has_reasoning_section": "reasoning",
    "has_final_step_by_step": "final_instructions",
}


def _parse_example_snippet(text: str) -> tuple[ExampleBlock, ...]:
    examples = []
    question: str | None = None
    for line in text.splitlines():
        if line.startswith(">> question:"):
            question = line[len(">> question:") :].strip()
        elif line.startswith(">> answer:") and question is not None:
            examples.append(ExampleBlock(question, line[len(">> answer:") :].strip()))
            question = None
    return tuple(examples)


def apply_feature(template: PromptTemplate, feature: str, snippet: str) -> PromptTemplate:
    """Return a new template version carrying the requested feature.

    Rule features merge into the rules section; section features replace or
    create their section from the snippet body; example_count installs the
    snippet's worked examples.
    """
    if feature in _RULE_FEATURES:
        existing = template.section("rules")
        new_rules = tuple(line.strip() for line in snippet.splitlines() if line.strip())
        section = PromptSection(
            "rules",
            body=existing.body if existing else "",
            rules=(existing.rules if existing else ()) + new_rules,
        )
    elif feature == "example_count":
        section = PromptSection("examples", examples=_parse_example_snippet(snippet))
    elif feature in _SECTION_FOR_FEATURE:
        section = PromptSection(_SECTION_FOR_FEATURE[feature], body=snippet.strip("\n"))
    else:
        raise ValueError(f"no application rule for feature {feature!r}")
    updated = prompts.upsert_section(template, section)
    return replace(
        updated,
        version=template.version + 1,
        created_from=(template.model_tag, template.version),
    )


class PromptFixer(Protocol):
    def propose(
        self,
        template: PromptTemplate,
        categories: Sequence[FailureCategory],
        hints: Sequence[str],
    ) -> PromptTemplate: ...


class ScriptedFixer:
    """Adds one hinted feature per call, drawn from a snippet library.

    The library directory holds one ``<feature>.snippet`` file per feature.
    When no hinted feature is missing and available the template is returned
    unchanged.
    """

    def __init__(self, snippet_dir: Path | str):
        self.snippets = {
            path.stem: path.read_text(encoding="utf-8")
            for path in sorted(Path(snippet_dir).glob("*.snippet"))
        }
        self.calls = 0

    def propose(
        self,
        template: PromptTemplate,
        categories: Sequence[FailureCategory],
        hints: Sequence[str],
    ) -> PromptTemplate:
        self.calls += 1
        features = lint(template)
        for category in categories:
            feature = FEATURE_FOR_CATEGORY[category]
            if feature_satisfied(features, feature) or feature not in self.snippets:
                continue
            return apply_feature(template, feature, self.snippets[feature])
        return template


class InteractiveFixer:
    """Prints the hints, waits for the human to edit the prompt file, reloads."""

    def __init__(self, registry: Registry, echo=print, wait=input):
        self.registry = registry
        self._echo = echo
        self._wait = wait

    def propose(
        self,
        template: PromptTemplate,
        categories: Sequence[FailureCategory],
        hints: Sequence[str],
    ) -> PromptTemplate:
        path = self.registry.path_for(template)
        self._echo(f"failing categories for task {template.task!r} on {template.model_tag!r}:")
        for category, text in zip(categories, hints):
            self._echo(f"  {category.value}: {text}")
        self._echo(f"edit {path} (bump @version to {template.version + 1}), then press Enter")
        self._wait("")
        text = path.read_text(encoding="utf-8")
        return prompts.parse_prompt_file(text, template.task, template.model_tag, str(path))


# ---------------------------------------------------------------------------
# Migration loop


@dataclass(frozen=True, slots=True)
class MigrationIteration:
    index: int
    report: RunReport
    prompt_versions: Mapping[str, int]
    action: str | None


@dataclass(frozen=True, slots=True)
class MigrationOutcome:
    status: str  # converged | iteration_limit | gate_loop_limit
    iterations: tuple[MigrationIteration, ...]
    gate_reports: tuple[RunReport, ...]
    testbed: Suite

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _failing_categories(report: RunReport) -> list[FailureCategory]:
    seen: dict[FailureCategory, None] = {}
    for result in report.results:
        if result.category is not None:
            seen.setdefault(result.category)
    return list(seen)


def migrate(
    registry: Registry,
    testbed_suite: Suite,
    regression_suite: Suite,
    provider: Provider,
    fixer: PromptFixer,
    model_tag: str,
    task: str = DEFAULT_TASK,
    max_iterations: int = 10,
    max_gate_loops: int = 3,
    parallelism: int = 1,
    strict: bool = True,
    gate_threshold: float = 100.0,
) -> MigrationOutcome:
    """Drive the migration loop until the testbed is clean and the gate holds.

    Each iteration runs the testbed; on failures the fixer proposes a new
    prompt version from the failing categories' hints. Once the testbed
    passes, the regression gate runs; failing regression cases are converted
    to hard-tier testbed cases and the loop restarts. Terminal status is
    converged, iteration_limit, or gate_loop_limit — never an exception.
    """
    testbed = testbed_suite
    iterations: list[MigrationIteration] = []
    gate_reports: list[RunReport] = []
    gate_loops = 0
    status = "iteration_limit"

    for index in range(1, max_iterations + 1):
        report = run_suite(
            provider, registry, testbed, model_tag, parallelism=parallelism, task=task, strict=strict
        )
        action = None
        if report.pass_rate == 100.0:
            gate_report = run_suite(
                provider,
                registry,
                regression_suite,
                model_tag,
                parallelism=parallelism,
                task=task,
                strict=strict,
            )
            gate_reports.append(gate_report)
            gate = regression_gate(gate_report, gate_threshold)
            if gate.passed:
                status = "converged"
                iterations.append(
                    MigrationIteration(index, report, dict(report.prompt_versions), None)
                )
                break
            gate_loops += 1
            if gate_loops > max_gate_loops:
                status = "gate_loop_limit"
                iterations.append(
                    MigrationIteration(index, report, dict(report.prompt_versions), None)
                )
                break
            added = []
            for case_id in gate.failed_case_ids:
                if testbed.case(case_id) is not None:
                    continue
                case = regression_suite.case(case_id)
                testbed = extend_suite(testbed, replace(case, tier="hard"))
                added.append(case_id)
            action = "extended testbed with " + ", ".join(added) if added else "gate failed"
        else:
            categories = _failing_categories(report)
            hints = [hint(category) for category in categories]
            template = registry.get(task, model_tag)
            proposal = fixer.propose(template, categories, hints)
            if proposal is not template and proposal != template:
                registry.update(proposal)
                if registry.root is not None:
                    registry.save(proposal)
                action = f"updated {task} to version {proposal.version}"
        iterations.append(MigrationIteration(index, report, dict(report.prompt_versions), action))

    return MigrationOutcome(
        status=status,
        iterations=tuple(iterations),
        gate_reports=tuple(gate_reports),
        testbed=testbed,
    )


# ---------------------------------------------------------------------------
# Report rendering and persistence


def report_to_json(report: RunReport, timestamp: str | None = None) -> dict:
    doc: dict = {
        "suite": report.suite,
        "model_tag": report.model_tag,
        "prompt_versions": dict(report.prompt_versions),
        "pass_rate": report.pass_rate,
        "histogram": dict(report.category_histogram),
        "usage": {
            "calls": report.total_usage.calls,
            "input_tokens": report.total_usage.input_tokens,
            "output_tokens": report.total_usage.output_tokens,
        },
        "results": [
            {
                "id": result.case_id,
                "verdict": "pass" if result.passed else "fail",
                "category": result.category.value if result.category else None,
                "raw_output": result.raw_output,
                "diff": result.diff.summary() if result.diff is not None and not result.diff.empty else None,
                "usage": {
                    "input_tokens": result.usage.input_tokens,
                    "output_tokens": result.usage.output_tokens,
                },
            }
            for result in report.results
        ],
    }
    if timestamp is not None:
        doc["generated_at"] = timestamp
    return doc


def render_table(report: RunReport) -> str:
    """Two-column pass-rate table, one row per report."""
    return f"Model | Tests Passed (%)\n{report.model_tag} | {report.pass_rate}"


def render_markdown(report: RunReport) -> str:
    return (
        "| Model | Tests Passed (%) |\n"
        "| --- | --- |\n"
        f"| {report.model_tag} | {report.pass_rate} |"
    )


def outcome_to_json(outcome: MigrationOutcome, timestamp: str | None = None) -> dict:
    doc: dict = {
        "status": outcome.status,
        "iterations": [
            {
                "index": iteration.index,
                "pass_rate": iteration.report.pass_rate,
                "prompt_versions": dict(iteration.prompt_versions),
                "histogram": dict(iteration.report.category_histogram),
                "action": iteration.action,
            }
            for iteration in outcome.iterations
        ],
        "gate_reports": [
            {"pass_rate": r.pass_rate, "failed": list(r.failed_case_ids())}
            for r in outcome.gate_reports
        ],
        "final_testbed_size": len(outcome.testbed.cases),
    }
    if timestamp is not None:
        doc["generated_at"] = timestamp
    return doc
