"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MathGenError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(MathGenError):
    """A run configuration, plan, or workflow config is invalid."""


class CorpusError(MathGenError):
    """Problem corpus could not be loaded or validated.

    ``row_errors`` carries (row_number, message) pairs for per-row failures.
    """

    def __init__(self, message: str, row_errors: list[tuple[int, str]] | None = None):
        super().__init__(message)
        self.row_errors = row_errors or []


class SamplingError(MathGenError):
    """Few-shot example sampling could not satisfy the request."""


class BackendError(MathGenError):
    """A chat backend call failed (network, credential, or wire format)."""


class ScriptExhaustedError(BackendError):
    """A scripted mock backend ran out of scripted responses."""


class ParseError(MathGenError):
    """An agent reply did not match the expected output grammar."""


class TurnFailedError(MathGenError):
    """An agent turn still failed to parse after corrective retries."""

    def __init__(self, speaker: str, attempts: int, last_error: str, raw: str):
        super().__init__(
            f"{speaker} turn failed after {attempts} attempts: {last_error}"
        )
        self.speaker = speaker
        self.attempts = attempts
        self.last_error = last_error
        self.raw = raw
