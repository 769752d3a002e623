"""Prompt lifecycle and migration harness for NL-to-SQL operator extraction.

Keeps an application's prompts stable across model releases: versioned
prompts per (task, model tag), tiered migration testbeds, strict parsing and
diffing of structured model output, a drift failure taxonomy, and a
migration loop with a regression gate — all verifiable offline against a
deterministic drift-simulating provider.
"""

from .fragments import (
    DiffSet,
    FilterPredicate,
    OperatorFragment,
    OrderKey,
    SchemaContext,
    canonicalize,
    compare,
    normalize_column,
)
from .grammar import ParsedOutput, ParseError, ParseErrorKind, parse_output, serialize
from .prompts import (
    ExampleBlock,
    PromptFeatureSet,
    PromptSection,
    PromptTemplate,
    Registry,
    diff_templates,
    lint,
    load_registry,
    render,
)
from .providers import ChatRequest, ChatResponse, DriftProfile, HttpProvider, MockProvider, Usage
from .drift import FailureCategory
from .runner import (
    CaseResult,
    MigrationOutcome,
    RunReport,
    categorize,
    hint,
    migrate,
    regression_gate,
    run_suite,
)
from .testbed import CorpusEntry, Suite, TestCase, extend_suite, generate_testbed

__version__ = "0.1.0"

__all__ = [
    "CaseResult",
    "ChatRequest",
    "ChatResponse",
    "CorpusEntry",
    "DiffSet",
    "DriftProfile",
    "ExampleBlock",
    "FailureCategory",
    "FilterPredicate",
    "HttpProvider",
    "MigrationOutcome",
    "MockProvider",
    "OperatorFragment",
    "OrderKey",
    "ParseError",
    "ParseErrorKind",
    "ParsedOutput",
    "PromptFeatureSet",
    "PromptSection",
    "PromptTemplate",
    "Registry",
    "RunReport",
    "SchemaContext",
    "Suite",
    "TestCase",
    "Usage",
    "canonicalize",
    "categorize",
    "compare",
    "diff_templates",
    "extend_suite",
    "generate_testbed",
    "hint",
    "lint",
    "load_registry",
    "migrate",
    "normalize_column",
    "parse_output",
    "regression_gate",
    "render",
    "run_suite",
    "serialize",
]
