"""Command-line surface: run suites, migrate prompts, generate testbeds,
lint and diff prompts.

Exit codes: 0 for a full pass or convergence, 1 for a clean run with
failures, 2 for configuration or IO problems.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import click

from . import prompts, providers, runner, testbed
from .errors import ConfigError, PmigError
from .prompts import diff_templates, lint, load_registry
from .runner import (
    DEFAULT_TASK,
    InteractiveFixer,
    ScriptedFixer,
    migrate,
    outcome_to_json,
    render_markdown,
    render_table,
    report_to_json,
    run_suite,
)
from .testbed import generate_testbed, load_corpus, load_suite, save_suite

REPORT_FORMATS = ("structured", "table", "markdown")


@dataclass
class Config:
    """Validated command configuration."""

    prompts_root: Path
    suites: dict[str, Path] = field(default_factory=dict)
    provider_spec: str = "mock:legacy-flexible"
    parallelism: int = 1
    strict: bool = True
    report_format: str = "structured"

    def __post_init__(self) -> None:
        kind, _, rest = self.provider_spec.partition(":")
        if kind not in ("mock", "http") or not rest:
            raise ConfigError(
                f"provider spec {self.provider_spec!r} must be mock:<profile> or http:<base_url>"
            )
        if self.parallelism < 1:
            raise ConfigError("parallelism must be at least 1")
        if self.report_format not in REPORT_FORMATS:
            raise ConfigError(f"unknown report format {self.report_format!r}")


def _timestamp(enabled: bool) -> str | None:
    if not enabled:
        return None
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(2)


def _write_report(report: runner.RunReport, path: Path, fmt: str, timestamp: str | None) -> None:
    if fmt == "structured":
        text = json.dumps(report_to_json(report, timestamp), indent=2, ensure_ascii=False) + "\n"
    elif fmt == "table":
        text = render_table(report) + "\n"
    else:
        text = render_markdown(report) + "\n"
    path.write_text(text, encoding="utf-8")


@click.group()
def main() -> None:
    """Prompt lifecycle and migration harness."""


@main.command("run")
@click.option("--suite", "suite_path", required=True, type=click.Path(), help="Suite JSON file.")
@click.option("--prompts", "prompts_root", required=True, type=click.Path(), help="Prompt registry root.")
@click.option("--model", "model_tag", required=True, help="Model tag selecting the prompt version.")
@click.option("--provider", "provider_spec", required=True, help="mock:<profile> or http:<base_url>.")
@click.option("--task", default=DEFAULT_TASK, show_default=True, help="Task whose prompt is run.")
@click.option("--report", "report_path", type=click.Path(), default=None, help="Write the report here.")
@click.option("--format", "report_format", type=click.Choice(REPORT_FORMATS), default="structured")
@click.option("--parallelism", default=1, show_default=True, type=int)
@click.option("--lenient", is_flag=True, help="Diagnostic-only mismatches pass with a warning.")
@click.option("--no-timestamp", is_flag=True, help="Omit the timestamp for byte-stable reports.")
def cmd_run(
    suite_path: str,
    prompts_root: str,
    model_tag: str,
    provider_spec: str,
    task: str,
    report_path: str | None,
    report_format: str,
    parallelism: int,
    lenient: bool,
    no_timestamp: bool,
) -> None:
    """Run one suite and print the pass-rate table."""
    try:
        config = Config(
            prompts_root=Path(prompts_root),
            suites={"main": Path(suite_path)},
            provider_spec=provider_spec,
            parallelism=parallelism,
            strict=not lenient,
            report_format=report_format,
        )
        registry = load_registry(config.prompts_root)
        suite = load_suite(config.suites["main"])
        provider = providers.make_provider(config.provider_spec, suite)
        report = run_suite(
            provider,
            registry,
            suite,
            model_tag,
            parallelism=config.parallelism,
            task=task,
            strict=config.strict,
        )
    except (PmigError, OSError, json.JSONDecodeError, ValueError) as exc:
        _fail(str(exc))
        return

    click.echo(render_table(report))
    if report.category_histogram:
        click.echo("failures by category:")
        for name, count in report.category_histogram.items():
            click.echo(f"  {name}: {count}")
    if report_path is not None:
        _write_report(report, Path(report_path), config.report_format, _timestamp(not no_timestamp))
    sys.exit(0 if report.pass_rate == 100.0 else 1)


@main.command("migrate")
@click.option("--testbed", "testbed_path", required=True, type=click.Path())
@click.option("--regression", "regression_path", required=True, type=click.Path())
@click.option("--prompts", "prompts_root", required=True, type=click.Path())
@click.option("--from", "from_tag", required=True, help="Model tag migrated away from.")
@click.option("--to", "to_tag", required=True, help="Model tag migrated onto.")
@click.option("--provider", "provider_spec", required=True)
@click.option("--fixer", "fixer_spec", default="interactive", show_default=True,
              help="interactive or scripted:<snippet dir>.")
@click.option("--task", default=DEFAULT_TASK, show_default=True)
@click.option("--max-iterations", default=10, show_default=True, type=int)
@click.option("--parallelism", default=1, show_default=True, type=int)
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--no-timestamp", is_flag=True)
def cmd_migrate(
    testbed_path: str,
    regression_path: str,
    prompts_root: str,
    from_tag: str,
    to_tag: str,
    provider_spec: str,
    fixer_spec: str,
    task: str,
    max_iterations: int,
    parallelism: int,
    report_path: str | None,
    no_timestamp: bool,
) -> None:
    """Migrate prompts from one model tag to another against a testbed."""
    try:
        config = Config(
            prompts_root=Path(prompts_root),
            suites={"testbed": Path(testbed_path), "regression": Path(regression_path)},
            provider_spec=provider_spec,
            parallelism=parallelism,
        )
        registry = load_registry(config.prompts_root)
        testbed_suite = load_suite(config.suites["testbed"])
        regression_suite = load_suite(config.suites["regression"])
        provider = providers.make_provider(config.provider_spec, (testbed_suite, regression_suite))

        # Seed any missing to-tag template from the from-tag version,
        # recording lineage in the new file's header.
        for source in registry.templates():
            if source.model_tag != from_tag:
                continue
            if registry.get_or_none(source.task, to_tag) is None:
                seeded = prompts.PromptTemplate(
                    task=source.task,
                    model_tag=to_tag,
                    sections=source.sections,
                    example_encoding=source.example_encoding,
                    version=1,
                    created_from=(from_tag, source.version),
                )
                registry.add(seeded)
                registry.save(seeded)

        if fixer_spec == "interactive":
            fixer = InteractiveFixer(registry)
        elif fixer_spec.startswith("scripted:"):
            snippet_dir = Path(fixer_spec[len("scripted:") :])
            if not snippet_dir.is_dir():
                raise ConfigError(f"snippet directory {snippet_dir} does not exist")
            fixer = ScriptedFixer(snippet_dir)
        else:
            raise ConfigError(f"unknown fixer {fixer_spec!r}")

        outcome = migrate(
            registry,
            testbed_suite,
            regression_suite,
            provider,
            fixer,
            model_tag=to_tag,
            task=task,
            max_iterations=max_iterations,
            parallelism=config.parallelism,
        )
    except (PmigError, OSError, json.JSONDecodeError, ValueError) as exc:
        _fail(str(exc))
        return

    for iteration in outcome.iterations:
        line = f"iteration {iteration.index}: testbed pass rate {iteration.report.pass_rate}"
        if iteration.action:
            line += f" ({iteration.action})"
        click.echo(line)
    for gate_report in outcome.gate_reports:
        click.echo(f"regression gate: pass rate {gate_report.pass_rate}")
    click.echo(f"status: {outcome.status}")
    if report_path is not None:
        doc = outcome_to_json(outcome, _timestamp(not no_timestamp))
        Path(report_path).write_text(
            json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
    sys.exit(0 if outcome.converged else 1)


@main.group("testbed")
def cmd_testbed() -> None:
    """Testbed maintenance."""


@cmd_testbed.command("generate")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--easy", "easy_n", default=40, show_default=True, type=int)
@click.option("--moderate", "moderate_n", default=35, show_default=True, type=int)
@click.option("--hard", "hard_n", default=35, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--name", default="migration-testbed", show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def cmd_testbed_generate(
    corpus_path: str,
    easy_n: int,
    moderate_n: int,
    hard_n: int,
    seed: int,
    name: str,
    out_path: str,
) -> None:
    """Generate a tiered testbed from a tagged corpus."""
    try:
        corpus = load_corpus(Path(corpus_path))
        suite = generate_testbed(
            corpus, easy_n=easy_n, moderate_n=moderate_n, hard_n=hard_n, seed=seed, name=name
        )
        save_suite(suite, Path(out_path))
    except (PmigError, OSError, json.JSONDecodeError, ValueError) as exc:
        _fail(str(exc))
        return
    counts = suite.tier_counts
    click.echo(
        f"wrote {len(suite.cases)} cases "
        f"(easy {counts['easy']}, moderate {counts['moderate']}, hard {counts['hard']}) to {out_path}"
    )
    sys.exit(0)


@main.group("prompt")
def cmd_prompt() -> None:
    """Prompt inspection."""


@cmd_prompt.command("lint")
@click.argument("task")
@click.argument("model_tag")
@click.option("--prompts", "prompts_root", required=True, type=click.Path())
def cmd_prompt_lint(task: str, model_tag: str, prompts_root: str) -> None:
    """Print the detected feature set of one prompt."""
    try:
        registry = load_registry(Path(prompts_root))
        template = registry.get(task, model_tag)
    except (PmigError, OSError) as exc:
        _fail(str(exc))
        return
    features = lint(template)
    for name, value in features.as_dict().items():
        rendered = str(value).lower() if isinstance(value, bool) else str(value)
        click.echo(f"{name}: {rendered}")
    sys.exit(0)


@cmd_prompt.command("diff")
@click.argument("task")
@click.argument("tag_a")
@click.argument("tag_b")
@click.option("--prompts", "prompts_root", required=True, type=click.Path())
def cmd_prompt_diff(task: str, tag_a: str, tag_b: str, prompts_root: str) -> None:
    """Print the section and feature differences between two prompt versions."""
    try:
        registry = load_registry(Path(prompts_root))
        template_a = registry.get(task, tag_a)
        template_b = registry.get(task, tag_b)
        section_diff = diff_templates(template_a, template_b)
    except (PmigError, OSError) as exc:
        _fail(str(exc))
        return
    if section_diff.empty:
        click.echo("no differences")
        sys.exit(0)
    for kind in section_diff.added:
        click.echo(f"added section: {kind}")
    for kind in section_diff.removed:
        click.echo(f"removed section: {kind}")
    for kind in section_diff.changed:
        click.echo(f"changed section: {kind}")
    if section_diff.encoding_changed:
        click.echo(
            f"example encoding: {template_a.example_encoding} -> {template_b.example_encoding}"
        )
    for name, old, new in section_diff.feature_changes:
        click.echo(f"feature {name}: {old} -> {new}")
    sys.exit(0)


if __name__ == "__main__":
    main()
