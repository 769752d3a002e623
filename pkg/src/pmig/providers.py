"""Completion providers behind one interface.

Two implementations of ``complete(request) -> ChatResponse``:

* HttpProvider speaks the OpenAI-compatible chat-completions wire format
  with retries and an in-flight cap.
* MockProvider simulates a model release deterministically from a drift
  profile: when the rendered prompt carries every feature the profile
  requires it answers every case perfectly, otherwise annotated cases get
  the characteristic wrong output for their failure mode.

The mock reads each case's expected fragment through the request's
``case_ref`` side channel; it never interprets the question text. It does,
however, inspect the rendered prompt to detect prompt features, so fixing a
prompt changes mock behavior the way a real model-version upgrade guide
promises.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

import httpx

from . import drift, grammar
from .drift import CATEGORY_BY_NAME, FailureCategory
from .errors import (
    AuthError,
    ConfigError,
    MalformedResponse,
    NetworkError,
    RateLimited,
    UnknownCase,
)
from .prompts import SECTION_HEADINGS, PromptFeatureSet
from .testbed import Suite, TestCase


@dataclass(frozen=True, slots=True)
class Message:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user"):
            raise ValueError(f"unsupported message role: {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")


@dataclass(frozen=True, slots=True)
class ChatRequest:
    model_tag: str
    messages: tuple[Message, ...]
    temperature: float = 0.0
    case_ref: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("a request needs at least one message")


@dataclass(frozen=True, slots=True)
class Usage:
    input_tokens: int
    output_tokens: int


@dataclass(frozen=True, slots=True)
class ChatResponse:
    content: str
    usage: Usage


class Provider(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


# ---------------------------------------------------------------------------
# Drift profiles


@dataclass(frozen=True)
class DriftProfile:
    """Deterministic behavioral model of one model release.

    ``required_flags`` and ``min_examples`` say which prompt features the
    release needs before it behaves; ``failure_modes`` lists how it fails
    when they are absent. ``residual_modes`` keep failing even with a fully
    featured prompt (empty for all bundled profiles). ``failure_rate``
    drives hash-based failure assignment for cases without annotations.
    """

    name: str
    required_flags: frozenset[str] = frozenset()
    min_examples: int = 0
    failure_modes: tuple[FailureCategory, ...] = ()
    residual_modes: tuple[FailureCategory, ...] = ()
    failure_rate: float = 0.0

    def satisfied_by(self, features: PromptFeatureSet) -> bool:
        if features.example_count < self.min_examples:
            return False
        return all(getattr(features, flag) for flag in self.required_flags)


BUNDLED_PROFILES = ("legacy-flexible", "strict-instruction", "creative-verbose")

_FEATURE_FIELDS = set(PromptFeatureSet().as_dict())


def _parse_requirements(items: Iterable[str]) -> tuple[frozenset[str], int]:
    flags = set()
    min_examples = 0
    for item in items:
        if item.startswith("example_count>="):
            min_examples = int(item[len("example_count>=") :])
            continue
        if item not in _FEATURE_FIELDS or item == "example_count":
            raise ConfigError(f"unknown feature requirement: {item!r}")
        flags.add(item)
    return frozenset(flags), min_examples


def load_profile(source: str | Path) -> tuple[DriftProfile, dict[str, FailureCategory]]:
    """Load a drift profile document, bundled by name or from a path.

    Returns the profile plus its case annotations (case id -> failure mode).
    """
    source = str(source)
    if source in BUNDLED_PROFILES:
        from . import data

        path = data.path("profiles", f"{source}.json")
    else:
        path = Path(source)
    if not path.is_file():
        raise ConfigError(f"drift profile {source!r} not found")
    doc = json.loads(path.read_text(encoding="utf-8"))
    try:
        flags, min_examples = _parse_requirements(doc.get("required_features", []))
        profile = DriftProfile(
            name=doc["profile"],
            required_flags=flags,
            min_examples=min_examples,
            failure_modes=tuple(CATEGORY_BY_NAME[m] for m in doc.get("failure_modes", [])),
            residual_modes=tuple(CATEGORY_BY_NAME[m] for m in doc.get("residual_modes", [])),
            failure_rate=float(doc.get("failure_rate", 0.0)),
        )
        annotations = {
            case_id: CATEGORY_BY_NAME[mode] for case_id, mode in doc.get("annotations", {}).items()
        }
    except KeyError as exc:
        raise ConfigError(f"drift profile {source!r} is malformed: missing {exc}") from None
    return profile, annotations


# ---------------------------------------------------------------------------
# Feature detection on rendered prompt text

_HEADING_TO_KIND = {heading: kind for kind, heading in SECTION_HEADINGS.items()}


def features_from_prompt_text(text: str) -> PromptFeatureSet:
    """Detect prompt features from rendered prompt text.

    Mirrors prompts.lint() on the rendered form: sections are recovered from
    their ``# <Section Name>`` headings, rules from bullet lines under
    ``# Rules``, and examples counted in any of the three encodings.
    """
    sections: dict[str, list[str]] = {}
    current: str | None = None
    for line in text.splitlines():
        if line.startswith("# ") and line[2:] in _HEADING_TO_KIND:
            current = _HEADING_TO_KIND[line[2:]]
            sections.setdefault(current, [])
            continue
        if current is not None:
            sections[current].append(line)

    rules = [line[2:].lower() for line in sections.get("rules", []) if line.startswith("- ")]
    example_lines = sections.get("examples", [])
    example_count = max(
        sum(1 for line in example_lines if line == "<example>"),
        sum(1 for line in example_lines if line.startswith("Question: ")),
        sum(1 for line in example_lines if line.startswith('{"question"')),
    )
    final_text = "\n".join(sections.get("final_instructions", [])).lower()
    return PromptFeatureSet(
        has_explicit_output_format="output_format" in sections,
        has_formatting_rules=bool(rules),
        has_underscore_rule=any("underscore" in r for r in rules),
        has_no_quote_rule=any("do not quote" in r for r in rules),
        has_empty_list_rule=any("filters: []" in r for r in rules),
        has_implicit_inference_rule=any("implicit" in r for r in rules),
        example_count=example_count,
        has_reasoning_section="reasoning" in sections,
        has_final_step_by_step="final_instructions" in sections and "step by step" in final_text,
    )


# ---------------------------------------------------------------------------
# Mock provider


def _usage_for(request: ChatRequest, content: str) -> Usage:
    input_tokens = sum(len(message.content.split()) for message in request.messages)
    return Usage(input_tokens=input_tokens, output_tokens=len(content.split()))


def _stable_hash(profile_name: str, case_id: str) -> int:
    digest = hashlib.sha256(f"{profile_name}:{case_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _hash_assigned_mode(profile: DriftProfile, case: TestCase) -> FailureCategory | None:
    if profile.failure_rate <= 0 or not profile.failure_modes:
        return None
    value = _stable_hash(profile.name, case.id)
    if (value % 1_000_000) / 1_000_000 >= profile.failure_rate:
        return None
    candidates = [m for m in profile.failure_modes if drift.applicable(m, case.expected)]
    if not candidates:
        return None
    return candidates[(value >> 24) % len(candidates)]


def mock_complete(
    profile: DriftProfile,
    request: ChatRequest,
    suite: Suite,
    registry_features: PromptFeatureSet,
    drift_annotations: Mapping[str, FailureCategory] | None = None,
) -> ChatResponse:
    """Answer one request under a drift profile.

    With every required feature present the response is the exact expected
    serialization (plus residual-mode corruption, none for bundled
    profiles). Otherwise an annotated case gets its mode's corruption, an
    unannotated case falls back to hash assignment at the profile's failure
    rate, and everything else is answered correctly. Deterministic.
    """
    if request.case_ref is None:
        raise UnknownCase("mock requests must carry a case_ref")
    case = suite.case(request.case_ref)
    if case is None:
        raise UnknownCase(f"case {request.case_ref!r} is not in suite {suite.name!r}")

    annotations = drift_annotations or {}
    satisfied = profile.satisfied_by(registry_features)
    mode = annotations.get(case.id)
    if mode is not None and mode not in profile.failure_modes:
        mode = None

    corrupt_now = False
    if mode is not None:
        corrupt_now = (not satisfied) or (mode in profile.residual_modes)
    elif not satisfied:
        mode = _hash_assigned_mode(profile, case)
        corrupt_now = mode is not None

    if corrupt_now:
        content = drift.corrupt(mode, case.expected)
    else:
        content = grammar.serialize(case.expected)
    return ChatResponse(content, _usage_for(request, content))


class MockProvider:
    """Deterministic offline provider driven by a drift profile.

    Accepts one suite or several (the migration loop runs both the testbed
    and the regression suite through one provider). Prompt features are
    re-detected from the rendered prompt on every call, so prompt fixes take
    effect immediately.
    """

    def __init__(
        self,
        profile: DriftProfile,
        suites: Suite | Iterable[Suite],
        annotations: Mapping[str, FailureCategory] | None = None,
    ):
        self.profile = profile
        self.annotations = dict(annotations or {})
        suite_list = [suites] if isinstance(suites, Suite) else list(suites)
        cases: dict[str, TestCase] = {}
        for suite in suite_list:
            for case in suite.cases:
                known = cases.get(case.id)
                if known is not None and known.expected != case.expected:
                    raise ValueError(f"case {case.id!r} has conflicting definitions across suites")
                cases.setdefault(case.id, case)
        self._merged = Suite(name="mock-cases", cases=tuple(cases.values()))

    def complete(self, request: ChatRequest) -> ChatResponse:
        prompt_text = "\n".join(message.content for message in request.messages)
        features = features_from_prompt_text(prompt_text)
        return mock_complete(self.profile, request, self._merged, features, self.annotations)


# ---------------------------------------------------------------------------
# OpenAI-compatible HTTP provider

API_KEY_VAR = "PMIG_API_KEY"
BASE_URL_VAR = "PMIG_BASE_URL"


class HttpProvider:
    """OpenAI-compatible chat-completions client.

    POSTs to ``<base_url>/chat/completions`` with a bearer token from
    PMIG_API_KEY. Retries up to ``max_retries`` times on 429 and 5xx with
    exponential backoff starting at one second; other errors are raised
    immediately. At most ``max_in_flight`` requests run concurrently.
    """

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        base = base_url or os.environ.get(BASE_URL_VAR)
        if not base:
            raise ConfigError(f"no base URL given and {BASE_URL_VAR} is not set")
        self.base_url = base.rstrip("/")
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_VAR)
        self.max_retries = max_retries
        self._sleep = sleep
        self._semaphore = threading.Semaphore(max_in_flight)
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "HttpProvider":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _post(self, payload: dict) -> httpx.Response:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            with self._semaphore:
                return self._client.post(
                    f"{self.base_url}/chat/completions", json=payload, headers=headers
                )
        except httpx.HTTPError as exc:
            raise NetworkError(f"request failed: {exc}") from exc

    def complete(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_tag,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
        }
        response = None
        for attempt in range(self.max_retries + 1):
            response = self._post(payload)
            if response.status_code == 429 or 500 <= response.status_code < 600:
                if attempt < self.max_retries:
                    self._sleep(float(2**attempt))
                    continue
                if response.status_code == 429:
                    raise RateLimited(f"still rate limited after {self.max_retries} retries")
                raise NetworkError(f"server error {response.status_code} after retries")
            break
        assert response is not None
        if response.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credentials ({response.status_code})")
        if response.status_code != 200:
            raise MalformedResponse(f"unexpected status {response.status_code}")
        try:
            doc = response.json()
            content = doc["choices"][0]["message"]["content"]
            if not isinstance(content, str):
                raise TypeError
        except (ValueError, KeyError, IndexError, TypeError):
            raise MalformedResponse("response body is not a chat completion") from None
        usage_doc = doc.get("usage") or {}
        try:
            usage = Usage(
                input_tokens=int(usage_doc["prompt_tokens"]),
                output_tokens=int(usage_doc["completion_tokens"]),
            )
        except (KeyError, TypeError, ValueError):
            usage = _usage_for(request, content)
        return ChatResponse(content, usage)


def make_provider(spec: str, suites: Suite | Iterable[Suite]) -> Provider:
    """Build a provider from a ``mock:<profile>`` or ``http:<base_url>`` spec."""
    kind, _, rest = spec.partition(":")
    if not rest:
        raise ConfigError(f"provider spec {spec!r} must look like mock:<profile> or http:<base_url>")
    if kind == "mock":
        profile, annotations = load_profile(rest)
        return MockProvider(profile, suites, annotations)
    if kind == "http":
        return HttpProvider(base_url=rest)
    raise ConfigError(f"unknown provider kind {kind!r}")
