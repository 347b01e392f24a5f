"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CaselabError(Exception):
    """Base class for all package errors."""


class ConfigError(CaselabError):
    """Bad or unknown configuration (tokenizer name, model name, parameters)."""


class IngestionError(CaselabError):
    """A dataset file is missing or a record cannot be parsed.

    ``path`` names the offending file, ``line`` the 1-based line number
    when the failure is record-level.
    """

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = path or ""
        if line is not None:
            loc = f"{loc}:{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class ValidationError(CaselabError):
    """A loaded object violates a dataset invariant.

    ``offenders`` lists the ids involved so callers can report them all.
    """

    def __init__(self, message: str, offenders: list[str] | None = None):
        if offenders:
            message = f"{message}: {', '.join(sorted(offenders))}"
        super().__init__(message)
        self.offenders = offenders or []


class IndexFormatError(CaselabError):
    """Index file has a wrong version tag, is corrupt, or mismatches its tokenizer."""


class LlmError(CaselabError):
    """LLM transport failure that persisted through all configured retries."""
