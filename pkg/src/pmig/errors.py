"""Exception types shared across the package."""

from __future__ import annotations


class PmigError(Exception):
    """Base class for every error this package raises deliberately."""


class EmptyName(PmigError):
    """A column name was empty after trimming."""


class InvalidColumn(PmigError):
    """A column token does not reduce to a valid identifier."""


class MissingRoot(PmigError):
    """The prompt registry root directory does not exist."""


class DuplicateTemplate(PmigError):
    """Two templates claim the same (task, model_tag) key."""


class TemplateSyntaxError(PmigError):
    """A .prompt file is malformed."""

    def __init__(self, path: str, line_number: int, message: str):
        self.path = path
        self.line_number = line_number
        super().__init__(f"{path}:{line_number}: {message}")


class UnboundPlaceholder(PmigError):
    """A template placeholder has no binding at render time."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no binding for placeholder {{{name}}}")


class TaskMismatch(PmigError):
    """Templates for different tasks cannot be diffed."""


class VersionConflict(PmigError):
    """A template revision did not increase the version by exactly 1."""


class MissingTemplate(PmigError):
    """The registry has no template for the requested (task, model_tag)."""

    def __init__(self, task: str, model_tag: str):
        self.task = task
        self.model_tag = model_tag
        super().__init__(f"no template for task {task!r} and model tag {model_tag!r}")


class CorpusError(PmigError):
    """A corpus document violates its integrity rules."""


class InsufficientCorpus(PmigError):
    """A tier cannot be filled from the eligible corpus entries."""

    def __init__(self, tier: str, needed: int, available: int):
        self.tier = tier
        self.needed = needed
        self.available = available
        super().__init__(
            f"tier {tier!r} needs {needed} cases but only {available} eligible entries exist"
        )


class DuplicateCase(PmigError):
    """A case id is already present in the suite."""


class ProviderError(PmigError):
    """Base class for completion provider failures."""


class NetworkError(ProviderError):
    """The endpoint could not be reached or kept failing."""


class AuthError(ProviderError):
    """The endpoint rejected the credentials."""


class RateLimited(ProviderError):
    """The endpoint kept returning 429 after all retries."""


class MalformedResponse(ProviderError):
    """The endpoint answered with an unusable payload."""


class UnknownCase(ProviderError):
    """The mock provider cannot resolve the request's case reference."""


class InapplicableMode(ProviderError):
    """A drift annotation names a failure mode the case cannot express."""


class NotAFailure(PmigError):
    """categorize() was called on a passing case."""


class ConfigError(PmigError):
    """Command-line or provider configuration is invalid."""
