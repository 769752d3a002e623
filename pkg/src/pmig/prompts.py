"""Prompt templates: sectioned structure, file format, registry, rendering,
feature linting, and diffing.

Templates are keyed by (task, model_tag) and stored one per file under
``<root>/<task>/<model_tag>.prompt``. The file format is line-oriented:

    @version 2 from gpt-4-32k@1
    @instructions
    Extract SQL filters from the input question.
    @rules
    - Use underscores for column names instead of spaces.
    @examples encoding=markup_tagged
    >> question: List the demographics details for males after 2009.
    >> answer: filters: [Gender='Male', Registration_Date>'2009']

Section markers must appear in the canonical order, at most once each.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from . import grammar
from .errors import (
    DuplicateTemplate,
    MissingRoot,
    MissingTemplate,
    PmigError,
    TaskMismatch,
    TemplateSyntaxError,
    UnboundPlaceholder,
    VersionConflict,
)

SECTION_ORDER = (
    "role_objective",
    "instructions",
    "rules",
    "reasoning",
    "output_format",
    "examples",
    "context",
    "final_instructions",
)

SECTION_HEADINGS = {
    "role_objective": "Role and Objective",
    "instructions": "Instructions",
    "rules": "Rules",
    "reasoning": "Reasoning Strategy",
    "output_format": "Output Format",
    "examples": "Examples",
    "context": "Context",
    "final_instructions": "Final Instructions",
}

SECTION_MARKERS = {
    "@role_objective": "role_objective",
    "@instructions": "instructions",
    "@rules": "rules",
    "@reasoning": "reasoning",
    "@output_format": "output_format",
    "@examples": "examples",
    "@context": "context",
    "@final": "final_instructions",
}
_MARKER_FOR_KIND = {kind: marker for marker, kind in SECTION_MARKERS.items()}

ENCODINGS = ("plain_text", "json_like", "markup_tagged")
PLACEHOLDERS = ("question", "context", "schema", "user_question", "external_context")

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_VERSION_RE = re.compile(r"@version\s+(\d+)(?:\s+from\s+(\S+)@(\d+))?\s*\Z")
_TAG_RE = re.compile(r"[A-Za-z0-9._-]+\Z")


@dataclass(frozen=True, slots=True)
class ExampleBlock:
    """A worked question/answer pair. The answer must parse cleanly."""

    question: str
    answer: str

    def __post_init__(self) -> None:
        if "\n" in self.question or "\n" in self.answer:
            raise ValueError("example questions and answers must be single lines")
        try:
            parsed = grammar.parse_output(self.answer)
        except grammar.ParseError as exc:
            raise ValueError(f"example answer is unparseable: {self.answer!r} ({exc})") from None
        if parsed.diagnostics:
            raise ValueError(f"example answer has unparseable lines: {self.answer!r}")


@dataclass(frozen=True, slots=True)
class PromptSection:
    """One template section. Rules only on kind=rules, examples only on kind=examples."""

    kind: str
    body: str = ""
    rules: tuple[str, ...] = ()
    examples: tuple[ExampleBlock, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rules", tuple(self.rules))
        object.__setattr__(self, "examples", tuple(self.examples))
        if self.kind not in SECTION_ORDER:
            raise ValueError(f"unknown section kind: {self.kind!r}")
        if self.rules and self.kind != "rules":
            raise ValueError(f"rules are only allowed on a rules section, not {self.kind}")
        if self.kind == "rules" and not self.rules:
            raise ValueError("a rules section must contain at least one rule")
        if self.examples and self.kind != "examples":
            raise ValueError(f"examples are only allowed on an examples section, not {self.kind}")
        for text in (self.body, *self.rules):
            for name in _PLACEHOLDER_RE.findall(text):
                if name not in PLACEHOLDERS:
                    raise ValueError(f"unknown placeholder {{{name}}} in {self.kind} section")
        for line in self.body.split("\n"):
            if line.startswith("@") or line.startswith(">>"):
                raise ValueError(f"section body line would break the file format: {line!r}")
            if self.kind == "rules" and line.startswith("- "):
                raise ValueError("rules section body cannot contain bullet lines")
        for rule in self.rules:
            if "\n" in rule:
                raise ValueError("rules must be single lines")


@dataclass(frozen=True, slots=True)
class PromptTemplate:
    """A versioned prompt for one (task, model_tag) pair."""

    task: str
    model_tag: str
    sections: tuple[PromptSection, ...]
    example_encoding: str = "markup_tagged"
    version: int = 1
    created_from: tuple[str, int] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sections", tuple(self.sections))
        for name in (self.task, self.model_tag):
            if not _TAG_RE.match(name):
                raise ValueError(f"invalid task or model tag: {name!r}")
        if self.example_encoding not in ENCODINGS:
            raise ValueError(f"unknown example encoding: {self.example_encoding!r}")
        if self.version < 1:
            raise ValueError("template versions start at 1")
        indices = [SECTION_ORDER.index(s.kind) for s in self.sections]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise ValueError("sections must follow the canonical order, at most one of each kind")

    def section(self, kind: str) -> PromptSection | None:
        for s in self.sections:
            if s.kind == kind:
                return s
        return None


def upsert_section(template: PromptTemplate, section: PromptSection) -> PromptTemplate:
    """Replace the same-kind section or insert it at its canonical position."""
    kept = [s for s in template.sections if s.kind != section.kind]
    kept.append(section)
    kept.sort(key=lambda s: SECTION_ORDER.index(s.kind))
    return replace(template, sections=tuple(kept))


@dataclass(frozen=True, slots=True)
class PromptFeatureSet:
    """Structural features a drift profile can require of a prompt."""

    has_explicit_output_format: bool = False
    has_formatting_rules: bool = False
    has_underscore_rule: bool = False
    has_no_quote_rule: bool = False
    has_empty_list_rule: bool = False
    has_implicit_inference_rule: bool = False
    example_count: int = 0
    has_reasoning_section: bool = False
    has_final_step_by_step: bool = False

    def as_dict(self) -> dict[str, bool | int]:
        return {
            "has_explicit_output_format": self.has_explicit_output_format,
            "has_formatting_rules": self.has_formatting_rules,
            "has_underscore_rule": self.has_underscore_rule,
            "has_no_quote_rule": self.has_no_quote_rule,
            "has_empty_list_rule": self.has_empty_list_rule,
            "has_implicit_inference_rule": self.has_implicit_inference_rule,
            "example_count": self.example_count,
            "has_reasoning_section": self.has_reasoning_section,
            "has_final_step_by_step": self.has_final_step_by_step,
        }


FEATURE_FLAGS = tuple(name for name in PromptFeatureSet().as_dict() if name != "example_count")


def lint(template: PromptTemplate) -> PromptFeatureSet:
    """Detect structural features by exact substring and section checks."""
    rules_section = template.section("rules")
    rules = [r.lower() for r in rules_section.rules] if rules_section else []
    examples_section = template.section("examples")
    final_section = template.section("final_instructions")
    return PromptFeatureSet(
        has_explicit_output_format=template.section("output_format") is not None,
        has_formatting_rules=bool(rules),
        has_underscore_rule=any("underscore" in r for r in rules),
        has_no_quote_rule=any("do not quote" in r for r in rules),
        has_empty_list_rule=any("filters: []" in r for r in rules),
        has_implicit_inference_rule=any("implicit" in r for r in rules),
        example_count=len(examples_section.examples) if examples_section else 0,
        has_reasoning_section=template.section("reasoning") is not None,
        has_final_step_by_step=final_section is not None
        and "step by step" in final_section.body.lower(),
    )


def _substitute(text: str, bindings: dict[str, str]) -> str:
    def repl(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise UnboundPlaceholder(name)
        return bindings[name]

    return _PLACEHOLDER_RE.sub(repl, text)


def _encode_examples(examples: tuple[ExampleBlock, ...], encoding: str) -> str:
    if encoding == "plain_text":
        blocks = [f"Question: {e.question}\nAnswer: {e.answer}" for e in examples]
    elif encoding == "markup_tagged":
        blocks = [
            f"<example>\n<question>{e.question}</question>\n<answer>{e.answer}</answer>\n</example>"
            for e in examples
        ]
    else:
        blocks = [
            json.dumps({"question": e.question, "answer": e.answer}, ensure_ascii=False)
            for e in examples
        ]
    return "\n".join(blocks)


def render(template: PromptTemplate, bindings: dict[str, str]) -> str:
    """Render a template to prompt text.

    Sections appear in canonical order under ``# <Section Name>`` headings;
    examples are encoded per the template's example_encoding. Deterministic:
    identical inputs produce byte-identical output.
    """
    blocks = []
    for section in template.sections:
        lines = [f"# {SECTION_HEADINGS[section.kind]}"]
        if section.body:
            lines.append(_substitute(section.body, bindings))
        for rule in section.rules:
            lines.append(f"- {_substitute(rule, bindings)}")
        if section.kind == "examples" and section.examples:
            lines.append(_encode_examples(section.examples, template.example_encoding))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


@dataclass(frozen=True, slots=True)
class SectionDiff:
    """Per-section changes between two templates of the same task."""

    added: tuple[str, ...] = ()
    removed: tuple[str, ...] = ()
    changed: tuple[str, ...] = ()
    encoding_changed: bool = False
    feature_changes: tuple[tuple[str, object, object], ...] = ()

    @property
    def empty(self) -> bool:
        return not (
            self.added or self.removed or self.changed or self.encoding_changed or self.feature_changes
        )


def diff_templates(a: PromptTemplate, b: PromptTemplate) -> SectionDiff:
    """Report sections added/removed/changed going from a to b, plus the
    feature-set delta."""
    if a.task != b.task:
        raise TaskMismatch(f"cannot diff templates for tasks {a.task!r} and {b.task!r}")
    a_kinds = {s.kind: s for s in a.sections}
    b_kinds = {s.kind: s for s in b.sections}
    added = tuple(k for k in SECTION_ORDER if k in b_kinds and k not in a_kinds)
    removed = tuple(k for k in SECTION_ORDER if k in a_kinds and k not in b_kinds)
    changed = tuple(
        k
        for k in SECTION_ORDER
        if k in a_kinds
        and k in b_kinds
        and (
            a_kinds[k].body != b_kinds[k].body
            or a_kinds[k].rules != b_kinds[k].rules
            or a_kinds[k].examples != b_kinds[k].examples
        )
    )
    features_a = lint(a).as_dict()
    features_b = lint(b).as_dict()
    feature_changes = tuple(
        (name, features_a[name], features_b[name])
        for name in features_a
        if features_a[name] != features_b[name]
    )
    return SectionDiff(
        added=added,
        removed=removed,
        changed=changed,
        encoding_changed=a.example_encoding != b.example_encoding,
        feature_changes=feature_changes,
    )


def parse_prompt_file(text: str, task: str, model_tag: str, path: str = "<string>") -> PromptTemplate:
    """Parse the .prompt file format. Raises TemplateSyntaxError with the
    offending line number."""
    lines = text.splitlines()
    idx = 0
    while idx < len(lines) and not lines[idx].strip():
        idx += 1
    if idx >= len(lines):
        raise TemplateSyntaxError(path, 1, "empty prompt file")
    header = _VERSION_RE.match(lines[idx].strip())
    if header is None:
        raise TemplateSyntaxError(path, idx + 1, "first line must be an @version header")
    version = int(header.group(1))
    created_from = None
    if header.group(2) is not None:
        created_from = (header.group(2), int(header.group(3)))

    sections: list[PromptSection] = []
    encoding = "markup_tagged"
    kind: str | None = None
    body_lines: list[str] = []
    rules: list[str] = []
    examples: list[ExampleBlock] = []
    pending_question: tuple[int, str] | None = None
    section_line = idx + 1

    def finish_section() -> None:
        nonlocal body_lines, rules, examples, pending_question
        if kind is None:
            return
        if pending_question is not None:
            raise TemplateSyntaxError(
                path, pending_question[0], ">> question line without a >> answer line"
            )
        body = "\n".join(body_lines).strip("\n")
        try:
            sections.append(PromptSection(kind, body=body, rules=tuple(rules), examples=tuple(examples)))
        except ValueError as exc:
            raise TemplateSyntaxError(path, section_line, str(exc)) from None
        body_lines, rules, examples, pending_question = [], [], [], None

    for line_number in range(idx + 1, len(lines)):
        line = lines[line_number]
        display_number = line_number + 1
        if line.startswith("@"):
            finish_section()
            marker, _, attr = line.partition(" ")
            if marker not in SECTION_MARKERS:
                raise TemplateSyntaxError(path, display_number, f"unknown marker {marker!r}")
            kind = SECTION_MARKERS[marker]
            section_line = display_number
            attr = attr.strip()
            if attr:
                if kind != "examples" or not attr.startswith("encoding="):
                    raise TemplateSyntaxError(path, display_number, f"unexpected attribute {attr!r}")
                encoding = attr[len("encoding=") :]
                if encoding not in ENCODINGS:
                    raise TemplateSyntaxError(path, display_number, f"unknown encoding {encoding!r}")
            continue
        if kind is None:
            if line.strip():
                raise TemplateSyntaxError(path, display_number, "content before the first section marker")
            continue
        if kind == "examples":
            if not line.strip():
                continue
            if line.startswith(">> question:"):
                if pending_question is not None:
                    raise TemplateSyntaxError(path, display_number, "two question lines in a row")
                pending_question = (display_number, line[len(">> question:") :].strip())
            elif line.startswith(">> answer:"):
                if pending_question is None:
                    raise TemplateSyntaxError(path, display_number, ">> answer line without a question")
                try:
                    examples.append(
                        ExampleBlock(pending_question[1], line[len(">> answer:") :].strip())
                    )
                except ValueError as exc:
                    raise TemplateSyntaxError(path, display_number, str(exc)) from None
                pending_question = None
            else:
                raise TemplateSyntaxError(path, display_number, "examples sections only hold >> lines")
            continue
        if kind == "rules" and line.startswith("- "):
            rules.append(line[2:])
            continue
        body_lines.append(line)
    finish_section()

    try:
        return PromptTemplate(
            task=task,
            model_tag=model_tag,
            sections=tuple(sections),
            example_encoding=encoding,
            version=version,
            created_from=created_from,
        )
    except ValueError as exc:
        raise TemplateSyntaxError(path, 1, str(exc)) from None


def format_prompt_file(template: PromptTemplate) -> str:
    """Inverse of parse_prompt_file for valid templates."""
    header = f"@version {template.version}"
    if template.created_from is not None:
        header += f" from {template.created_from[0]}@{template.created_from[1]}"
    lines = [header]
    for section in template.sections:
        if section.kind == "examples":
            lines.append(f"@examples encoding={template.example_encoding}")
        else:
            lines.append(_MARKER_FOR_KIND[section.kind])
        if section.body:
            lines.extend(section.body.split("\n"))
        for rule in section.rules:
            lines.append(f"- {rule}")
        for example in section.examples:
            lines.append(f">> question: {example.question}")
            lines.append(f">> answer: {example.answer}")
    return "\n".join(lines) + "\n"


class Registry:
    """In-memory template store keyed by (task, model_tag).

    Loaded once and then read-only during runs; new versions are written
    back through save() between runs.
    """

    def __init__(self, root: Path | None = None):
        self.root = Path(root) if root is not None else None
        self._templates: dict[tuple[str, str], PromptTemplate] = {}

    def add(self, template: PromptTemplate) -> None:
        key = (template.task, template.model_tag)
        if key in self._templates:
            raise DuplicateTemplate(f"duplicate template for task {key[0]!r}, model tag {key[1]!r}")
        self._templates[key] = template

    def get(self, task: str, model_tag: str) -> PromptTemplate:
        try:
            return self._templates[(task, model_tag)]
        except KeyError:
            raise MissingTemplate(task, model_tag) from None

    def get_or_none(self, task: str, model_tag: str) -> PromptTemplate | None:
        return self._templates.get((task, model_tag))

    def update(self, template: PromptTemplate) -> None:
        key = (template.task, template.model_tag)
        if key not in self._templates:
            raise MissingTemplate(*key)
        old = self._templates[key]
        if template.version != old.version + 1:
            raise VersionConflict(
                f"template {key} must go from version {old.version} to {old.version + 1}, "
                f"got {template.version}"
            )
        self._templates[key] = template

    def templates(self) -> tuple[PromptTemplate, ...]:
        return tuple(self._templates[key] for key in sorted(self._templates))

    def tasks(self) -> tuple[str, ...]:
        return tuple(sorted({task for task, _ in self._templates}))

    def path_for(self, template: PromptTemplate) -> Path:
        if self.root is None:
            raise PmigError("registry has no root directory to save into")
        return self.root / template.task / f"{template.model_tag}.prompt"

    def save(self, template: PromptTemplate) -> Path:
        path = self.path_for(template)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(format_prompt_file(template), encoding="utf-8")
        return path


def load_registry(root: Path | str) -> Registry:
    """Load every ``<root>/<task>/<model_tag>.prompt`` file."""
    root = Path(root)
    if not root.is_dir():
        raise MissingRoot(f"prompt root {root} does not exist or is not a directory")
    registry = Registry(root)
    for task_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for prompt_file in sorted(task_dir.glob("*.prompt")):
            model_tag = prompt_file.name[: -len(".prompt")]
            text = prompt_file.read_text(encoding="utf-8")
            template = parse_prompt_file(text, task_dir.name, model_tag, str(prompt_file))
            registry.add(template)
    return registry
