"""Runner: verdicts, categorization precedence, gates, hints, migration loop."""

from __future__ import annotations

import json

import pytest

from pmig import data
from pmig.drift import FailureCategory
from pmig.errors import MissingTemplate, NotAFailure, UnknownCase
from pmig.fragments import FilterPredicate, OperatorFragment, OrderKey, SchemaContext, canonicalize
from pmig.grammar import ParseError, parse_output, serialize
from pmig.prompts import Registry, lint, load_registry
from pmig.providers import DriftProfile, MockProvider, load_profile
from pmig.runner import (
    FEATURE_FOR_CATEGORY,
    MIN_EXAMPLES,
    ScriptedFixer,
    apply_feature,
    categorize,
    feature_satisfied,
    hint,
    migrate,
    regression_gate,
    render_markdown,
    render_table,
    report_to_json,
    round_percentage,
    run_suite,
)
from pmig.testbed import Suite, TestCase, load_suite

SCHEMA = SchemaContext(
    "employees",
    frozenset({"Employee_Name", "Department", "TIMES_LATE", "Tasks_Completed", "Hire_Date"}),
)


def frag(**kwargs) -> OperatorFragment:
    return canonicalize(OperatorFragment(**kwargs))


def parsed(text: str):
    return parse_output(text)


class TestCategorize:
    def test_missing_ordering(self):
        expected = frag(order_by=(OrderKey("Hire_Date", "ASC"),), select=("Employee_Name",))
        assert (
            categorize(expected, parsed("select: [Employee_Name]"), SCHEMA)
            is FailureCategory.MISSING_ORDERING
        )

    def test_missing_grouping(self):
        expected = frag(group_by=("Department",), select=("Department",))
        assert (
            categorize(expected, parsed("select: [Department]"), SCHEMA)
            is FailureCategory.MISSING_GROUPING
        )

    def test_redundant_operation(self):
        expected = frag(select=("Employee_Name",))
        actual = parsed("select: [Employee_Name]\norder_by: [Employee_Name ASC]")
        assert categorize(expected, actual, SCHEMA) is FailureCategory.REDUNDANT_OPERATION

    def test_column_simplification_wins_over_nonexistent(self):
        expected = frag(filters=(FilterPredicate("TIMES_LATE", ">", "3"),))
        actual = parsed("filters: [TIMES>'3']")  # truncation of TIMES_LATE, not in schema
        assert categorize(expected, actual, SCHEMA) is FailureCategory.COLUMN_SIMPLIFICATION

    def test_column_value_confusion(self):
        expected = frag(filters=(FilterPredicate("Employee_Name", "=", "John_Smith"),))
        actual = parsed("filters: [John='Smith']")
        assert categorize(expected, actual, SCHEMA) is FailureCategory.COLUMN_VALUE_CONFUSION

    def test_nonexistent_column(self):
        expected = frag(filters=(FilterPredicate("Department", "=", "Sales"),))
        actual = parsed("filters: [Division='Sales']")
        assert categorize(expected, actual, SCHEMA) is FailureCategory.NONEXISTENT_COLUMN

    def test_missing_implicit_filter(self):
        expected = frag(
            filters=(
                FilterPredicate("Department", "=", "Sales"),
                FilterPredicate("TIMES_LATE", ">", "3"),
            )
        )
        actual = parsed("filters: [Department='Sales']")
        assert categorize(expected, actual, SCHEMA) is FailureCategory.MISSING_IMPLICIT_FILTER

    def test_semantic_misinterpretation_fallback(self):
        expected = frag(filters=(FilterPredicate("Department", "=", "Sales"),))
        actual = parsed("filters: [Department='Finance']")
        assert categorize(expected, actual, SCHEMA) is FailureCategory.SEMANTIC_MISINTERPRETATION

    def test_info_message_leak_beats_field_rules(self):
        expected = frag(order_by=(OrderKey("Hire_Date", "ASC"),))
        actual = parsed("could not find Hire_Date\nfilters: []")
        assert categorize(expected, actual, SCHEMA) is FailureCategory.INFO_MESSAGE_LEAK

    def test_parse_error_is_format_violation(self):
        expected = frag(filters=(FilterPredicate("Department", "=", "Sales"),))
        with pytest.raises(ParseError) as excinfo:
            parse_output("filters: (Department='Sales')")
        assert categorize(expected, excinfo.value, SCHEMA) is FailureCategory.FORMAT_VIOLATION

    def test_fused_operator_parse_error(self):
        expected = frag(filters=(FilterPredicate("Department", "=", "Sales"),))
        with pytest.raises(ParseError) as excinfo:
            parse_output("filters: [Department>=='Sales']")
        assert categorize(expected, excinfo.value, SCHEMA) is FailureCategory.OPERATOR_COLUMN_FUSION

    def test_matching_output_raises_not_a_failure(self):
        expected = frag(filters=(FilterPredicate("Department", "=", "Sales"),))
        with pytest.raises(NotAFailure):
            categorize(expected, parsed(serialize(expected)), SCHEMA)


class TestRoundPercentage:
    @pytest.mark.parametrize(
        "passed,total,rate",
        [(150, 150, 100.0), (147, 150, 98.0), (146, 150, 97.3), (0, 150, 0.0), (1, 3, 33.3), (2, 3, 66.7)],
    )
    def test_round_half_up(self, passed, total, rate):
        assert round_percentage(passed, total) == rate

    def test_exact_half_rounds_up(self):
        assert round_percentage(125, 1000) == 12.5
        assert round_percentage(1, 16) == 6.3  # 6.25 rounds half up


def small_suite() -> Suite:
    cases = (
        TestCase(
            "S1", "easy", "sales people", SCHEMA,
            frag(filters=(FilterPredicate("Department", "=", "Sales"),)), "S1",
        ),
        TestCase(
            "S2", "easy", "recent hires", SCHEMA,
            frag(order_by=(OrderKey("Hire_Date", "DESC"),), select=("Employee_Name",)), "S2",
        ),
    )
    return Suite("small", cases)


def legacy_registry() -> Registry:
    return load_registry(data.path("prompts_legacy"))


class TestRunSuite:
    def test_all_pass_under_legacy_profile(self):
        profile, annotations = load_profile("legacy-flexible")
        suite = small_suite()
        provider = MockProvider(profile, suite, annotations)
        report = run_suite(provider, legacy_registry(), suite, "gpt-4-32k")
        assert report.pass_rate == 100.0
        assert report.category_histogram == {}
        assert report.total_usage.calls == 2
        assert report.prompt_versions == {"filter_extract": 1}

    def test_annotated_failure_is_categorized(self):
        profile, _ = load_profile("strict-instruction")
        suite = small_suite()
        provider = MockProvider(profile, suite, {"S2": FailureCategory.MISSING_ORDERING})
        report = run_suite(provider, legacy_registry(), suite, "gpt-4.1")
        assert report.pass_rate == 50.0
        assert report.category_histogram == {"MissingOrdering": 1}
        failing = [r for r in report.results if not r.passed]
        assert failing[0].case_id == "S2"
        assert failing[0].diff is not None and failing[0].diff.missing_order_by

    def test_results_stay_in_suite_order_under_parallelism(self):
        profile, annotations = load_profile("legacy-flexible")
        suite = load_suite(data.path("regression_150.json"))
        provider = MockProvider(profile, suite, annotations)
        registry = legacy_registry()
        sequential = run_suite(provider, registry, suite, "gpt-4-32k", parallelism=1)
        concurrent = run_suite(provider, registry, suite, "gpt-4-32k", parallelism=8)
        assert [r.case_id for r in sequential.results] == [c.id for c in suite.cases]
        assert report_to_json(sequential) == report_to_json(concurrent)

    def test_provider_error_becomes_format_violation(self):
        class FailingProvider:
            def complete(self, request):
                raise UnknownCase("boom")

        suite = small_suite()
        report = run_suite(FailingProvider(), legacy_registry(), suite, "gpt-4-32k")
        assert report.pass_rate == 0.0
        assert all(r.category is FailureCategory.FORMAT_VIOLATION for r in report.results)
        assert all("provider error" in r.raw_output for r in report.results)

    def test_missing_template(self):
        profile, annotations = load_profile("legacy-flexible")
        suite = small_suite()
        provider = MockProvider(profile, suite, annotations)
        with pytest.raises(MissingTemplate):
            run_suite(provider, legacy_registry(), suite, "gpt-9000")

    def test_lenient_mode_downgrades_diagnostics(self):
        class LeakyProvider:
            def complete(self, request):
                from pmig.providers import ChatResponse, Usage

                case = small_suite().case(request.case_ref)
                content = "note: matched the schema\n" + serialize(case.expected)
                return ChatResponse(content, Usage(1, 1))

        suite = small_suite()
        strict_report = run_suite(LeakyProvider(), legacy_registry(), suite, "gpt-4-32k")
        assert strict_report.pass_rate == 0.0
        assert all(r.category is FailureCategory.INFO_MESSAGE_LEAK for r in strict_report.results)
        lenient_report = run_suite(
            LeakyProvider(), legacy_registry(), suite, "gpt-4-32k", strict=False
        )
        assert lenient_report.pass_rate == 100.0

    def test_report_accounting_matches_recomputation(self):
        profile, annotations = load_profile("strict-instruction")
        suite = load_suite(data.path("regression_150.json"))
        provider = MockProvider(profile, suite, annotations)
        report = run_suite(provider, legacy_registry(), suite, "gpt-4.1")
        passed = sum(1 for r in report.results if r.passed)
        assert report.pass_rate == round_percentage(passed, len(report.results))
        from collections import Counter

        histogram = Counter(r.category.value for r in report.results if r.category)
        assert dict(report.category_histogram) == dict(histogram)
        assert report.total_usage.input_tokens == sum(r.usage.input_tokens for r in report.results)
        assert report.total_usage.calls == len(report.results)


class TestGate:
    def test_full_pass(self):
        profile, annotations = load_profile("legacy-flexible")
        suite = small_suite()
        report = run_suite(MockProvider(profile, suite, annotations), legacy_registry(), suite, "gpt-4-32k")
        assert regression_gate(report).passed

    def test_fail_lists_case_ids(self):
        profile, _ = load_profile("strict-instruction")
        suite = small_suite()
        provider = MockProvider(profile, suite, {"S2": FailureCategory.MISSING_ORDERING})
        report = run_suite(provider, legacy_registry(), suite, "gpt-4.1")
        gate = regression_gate(report)
        assert not gate.passed
        assert gate.failed_case_ids == ("S2",)

    def test_custom_threshold(self):
        profile, _ = load_profile("strict-instruction")
        suite = small_suite()
        provider = MockProvider(profile, suite, {"S2": FailureCategory.MISSING_ORDERING})
        report = run_suite(provider, legacy_registry(), suite, "gpt-4.1")
        assert regression_gate(report, threshold=50.0).passed

    def test_bundled_numbers_through_the_gate(self):
        suite = load_suite(data.path("regression_150.json"))
        registry = legacy_registry()
        profile, annotations = load_profile("strict-instruction")
        report = run_suite(MockProvider(profile, suite, annotations), registry, suite, "gpt-4.1")
        gate = regression_gate(report)  # threshold 100.0
        assert not gate.passed
        assert len(gate.failed_case_ids) == 3
        profile, annotations = load_profile("creative-verbose")
        report = run_suite(
            MockProvider(profile, suite, annotations), registry, suite, "gpt-4.5-preview"
        )
        assert report.pass_rate == 97.3
        assert regression_gate(report, threshold=97.0).passed


class TestHints:
    def test_every_category_has_a_hint_naming_its_feature(self):
        for category in FailureCategory:
            text = hint(category)
            feature = FEATURE_FOR_CATEGORY[category]
            expected_name = f"example_count>={MIN_EXAMPLES}" if feature == "example_count" else feature
            assert expected_name in text

    def test_pinned_hint_features(self):
        assert "has_explicit_output_format" in hint(FailureCategory.FORMAT_VIOLATION)
        assert "has_implicit_inference_rule" in hint(FailureCategory.MISSING_IMPLICIT_FILTER)
        assert "has_empty_list_rule" in hint(FailureCategory.INFO_MESSAGE_LEAK)

    def test_hint_coverage_spans_profile_requirements(self):
        # The features a profile requires must be reachable through the
        # hints of its own failure modes, or migration could never converge.
        for name in ("strict-instruction", "creative-verbose"):
            profile, _ = load_profile(name)
            hinted = {FEATURE_FOR_CATEGORY[mode] for mode in profile.failure_modes}
            required = set(profile.required_flags)
            if profile.min_examples:
                required.add("example_count")
            assert required <= hinted


class TestScriptedFixer:
    def test_adds_one_missing_feature_per_call(self):
        registry = legacy_registry()
        template = registry.get("filter_extract", "gpt-4.1")
        fixer = ScriptedFixer(data.path("fixer_snippets"))
        proposal = fixer.propose(
            template,
            [FailureCategory.MISSING_ORDERING, FailureCategory.MISSING_IMPLICIT_FILTER],
            [hint(FailureCategory.MISSING_ORDERING), hint(FailureCategory.MISSING_IMPLICIT_FILTER)],
        )
        assert proposal.version == template.version + 1
        assert proposal.created_from == (template.model_tag, template.version)
        assert lint(proposal).has_formatting_rules
        assert not lint(proposal).has_implicit_inference_rule  # one feature per call

    def test_feature_monotonicity(self):
        registry = legacy_registry()
        template = registry.get("filter_extract", "gpt-4.1")
        fixer = ScriptedFixer(data.path("fixer_snippets"))
        categories = list(FailureCategory)
        hints = [hint(c) for c in categories]
        current = template
        for _ in range(12):
            before = lint(current).as_dict()
            proposal = fixer.propose(current, categories, hints)
            after = lint(proposal).as_dict()
            for name, value in before.items():
                if name == "example_count":
                    assert after[name] >= value
                elif value:
                    assert after[name], f"{name} was unset by the fixer"
            if proposal == current:
                break
            current = proposal
        final = lint(current)
        assert all(feature_satisfied(final, f) for f in FEATURE_FOR_CATEGORY.values())

    def test_empty_snippet_dir_returns_template_unchanged(self, tmp_path):
        registry = legacy_registry()
        template = registry.get("filter_extract", "gpt-4.1")
        fixer = ScriptedFixer(tmp_path)
        proposal = fixer.propose(template, [FailureCategory.MISSING_ORDERING], ["hint"])
        assert proposal == template

    def test_apply_feature_example_count(self):
        registry = legacy_registry()
        template = registry.get("filter_extract", "gpt-4.1")
        snippet = data.path("fixer_snippets", "example_count.snippet").read_text(encoding="utf-8")
        proposal = apply_feature(template, "example_count", snippet)
        assert lint(proposal).example_count == 3


class TestInteractiveFixer:
    def test_prints_hints_and_reloads_edited_file(self, tmp_path):
        import shutil

        from pmig.prompts import format_prompt_file, upsert_section, PromptSection
        from pmig.runner import InteractiveFixer
        from dataclasses import replace

        shutil.copytree(data.path("prompts_legacy"), tmp_path / "prompts")
        registry = load_registry(tmp_path / "prompts")
        template = registry.get("filter_extract", "gpt-4.1")
        path = registry.path_for(template)
        echoed: list[str] = []

        def human_edit(_prompt: str) -> str:
            edited = upsert_section(
                template, PromptSection("output_format", body="The output must follow: filters: [...]")
            )
            edited = replace(edited, version=template.version + 1)
            path.write_text(format_prompt_file(edited), encoding="utf-8")
            return ""

        fixer = InteractiveFixer(registry, echo=echoed.append, wait=human_edit)
        proposal = fixer.propose(
            template, [FailureCategory.FORMAT_VIOLATION], [hint(FailureCategory.FORMAT_VIOLATION)]
        )
        assert proposal.version == template.version + 1
        assert lint(proposal).has_explicit_output_format
        assert any("FormatViolation" in line for line in echoed)
        assert any("has_explicit_output_format" in line for line in echoed)


def migration_setup(tmp_path, profile_name="strict-instruction"):
    import shutil

    shutil.copytree(data.path("prompts_legacy"), tmp_path / "prompts")
    registry = load_registry(tmp_path / "prompts")
    testbed = load_suite(data.path("testbed_110.json"))
    regression = load_suite(data.path("regression_150.json"))
    profile, annotations = load_profile(profile_name)
    provider = MockProvider(profile, (testbed, regression), annotations)
    fixer = ScriptedFixer(data.path("fixer_snippets"))
    return registry, testbed, regression, provider, fixer


class TestMigrate:
    def test_converges_from_legacy_under_strict(self, tmp_path):
        registry, testbed, regression, provider, fixer = migration_setup(tmp_path)
        outcome = migrate(registry, testbed, regression, provider, fixer, model_tag="gpt-4.1")
        assert outcome.status == "converged"
        assert len(outcome.iterations) <= 9
        rates = [it.report.pass_rate for it in outcome.iterations]
        assert rates == sorted(rates)  # pass rate never regresses
        assert outcome.iterations[-1].report.pass_rate == 100.0
        assert outcome.gate_reports[-1].pass_rate == 100.0
        final = registry.get("filter_extract", "gpt-4.1")
        assert final.version == 1 + fixer.calls
        on_disk = (tmp_path / "prompts" / "filter_extract" / "gpt-4.1.prompt").read_text(encoding="utf-8")
        assert on_disk.startswith(f"@version {final.version} from gpt-4.1@{final.version - 1}")

    def test_already_passing_prompts_converge_without_fixing(self, tmp_path):
        import shutil

        shutil.copytree(data.path("prompts_migrated"), tmp_path / "prompts")
        registry = load_registry(tmp_path / "prompts")
        testbed = load_suite(data.path("testbed_110.json"))
        regression = load_suite(data.path("regression_150.json"))
        profile, annotations = load_profile("strict-instruction")
        provider = MockProvider(profile, (testbed, regression), annotations)
        fixer = ScriptedFixer(data.path("fixer_snippets"))
        outcome = migrate(registry, testbed, regression, provider, fixer, model_tag="gpt-4.1")
        assert outcome.status == "converged"
        assert len(outcome.iterations) == 1
        assert fixer.calls == 0

    def test_unchanging_fixer_hits_iteration_limit(self, tmp_path):
        class StubbornFixer:
            def propose(self, template, categories, hints):
                return template

        registry, testbed, regression, provider, _ = migration_setup(tmp_path)
        outcome = migrate(
            registry, testbed, regression, provider, StubbornFixer(), model_tag="gpt-4.1",
            max_iterations=4,
        )
        assert outcome.status == "iteration_limit"
        assert len(outcome.iterations) == 4

    def test_gate_failure_extends_testbed_with_hard_cases(self, tmp_path):
        # A profile that only annotates regression cases: the testbed passes
        # immediately, the gate fails, and its failures become hard-tier
        # testbed cases whose categories then drive the fixes. The profile's
        # required features are exactly the ones those categories hint, so
        # the loop can converge from the extended cases alone.
        registry, _, regression, _, fixer = migration_setup(tmp_path)
        profile = DriftProfile(
            name="gate-exercise",
            required_flags=frozenset({"has_formatting_rules", "has_implicit_inference_rule"}),
            failure_modes=(
                FailureCategory.MISSING_ORDERING,
                FailureCategory.MISSING_IMPLICIT_FILTER,
            ),
        )
        annotations = {
            "R001": FailureCategory.MISSING_ORDERING,
            "R003": FailureCategory.MISSING_IMPLICIT_FILTER,
        }
        empty_testbed = Suite("tiny", ())
        provider = MockProvider(profile, (empty_testbed, regression), annotations)
        outcome = migrate(
            registry, empty_testbed, regression, provider, fixer, model_tag="gpt-4.1"
        )
        assert outcome.status == "converged"
        extended_ids = {c.id for c in outcome.testbed.cases}
        assert {"R001", "R003"} <= extended_ids
        added = [c for c in outcome.testbed.cases if c.id in ("R001", "R003")]
        assert all(case.tier == "hard" for case in added)
        for case in added:
            assert case.expected == regression.case(case.id).expected  # verbatim
        assert len(outcome.gate_reports) >= 2  # failed once, then held

    def test_gate_loop_limit(self, tmp_path):
        # With no gate-retry budget the first regression failure terminates
        # the loop with gate_loop_limit instead of extending the testbed.
        registry, _, regression, _, fixer = migration_setup(tmp_path)
        profile = DriftProfile(
            name="stuck",
            failure_modes=(FailureCategory.MISSING_ORDERING,),
            residual_modes=(FailureCategory.MISSING_ORDERING,),
        )
        annotations = {"R001": FailureCategory.MISSING_ORDERING}
        empty_testbed = Suite("tiny", ())
        provider = MockProvider(profile, (empty_testbed, regression), annotations)
        outcome = migrate(
            registry, empty_testbed, regression, provider, fixer, model_tag="gpt-4.1",
            max_gate_loops=0,
        )
        assert outcome.status == "gate_loop_limit"
        assert len(outcome.iterations) == 1


class TestReportRendering:
    def make_report(self):
        profile, annotations = load_profile("legacy-flexible")
        suite = small_suite()
        return run_suite(MockProvider(profile, suite, annotations), legacy_registry(), suite, "gpt-4-32k")

    def test_table(self):
        report = self.make_report()
        assert render_table(report) == "Model | Tests Passed (%)\ngpt-4-32k | 100.0"

    def test_markdown_single_table(self):
        text = render_markdown(self.make_report())
        assert text.splitlines()[0] == "| Model | Tests Passed (%) |"
        assert text.count("| Model |") == 1

    def test_json_fields(self):
        doc = report_to_json(self.make_report(), timestamp="2026-01-01T00:00:00+00:00")
        assert set(doc) == {
            "suite", "model_tag", "prompt_versions", "pass_rate", "histogram",
            "usage", "results", "generated_at",
        }
        assert doc["usage"]["calls"] == 2
        assert doc["results"][0]["verdict"] == "pass"
        untimed = report_to_json(self.make_report())
        assert "generated_at" not in untimed
        assert json.dumps(untimed) == json.dumps(report_to_json(self.make_report()))
