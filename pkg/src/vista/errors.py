"""Exception taxonomy shared across the pipeline.

Workers treat any ``VistaError`` raised inside a job as an anomaly: the
scheduler retries the job up to its stage's retry limit and then
quarantines it. Errors outside jobs (bad config, unreadable files)
surface directly to the caller.
"""

from __future__ import annotations


class VistaError(Exception):
    """Base class for all library errors."""


class EmptyInput(VistaError):
    pass


class InvalidParameter(VistaError):
    pass


class IncompleteSegment(VistaError):
    pass


class NotCanonical(VistaError):
    pass


class UnknownNode(VistaError):
    pass


class EmptyCandidates(VistaError):
    pass


class NoCandidates(VistaError):
    """The graph cannot serve this query; callers fall back instead of retrying."""


class TemplateError(VistaError):
    pass


class MalformedOracleOutput(VistaError):
    """Oracle response did not match the template grammar.

    ``offset`` is the byte position where matching gave up, when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class EmptyOracleOutput(VistaError):
    pass


class OracleTimeout(VistaError):
    pass


class OracleUnavailable(VistaError):
    pass


class EvaluationError(VistaError):
    pass


class UnsupportedConstruct(VistaError):
    pass


class DegenerateSpan(VistaError):
    pass


class ValidationExhausted(VistaError):
    """Every fitting attempt exceeded the error threshold.

    Carries the best attempt so callers can inspect (or log) what was tried.
    """

    def __init__(self, message: str, best_spec=None, best_report=None):
        super().__init__(message)
        self.best_spec = best_spec
        self.best_report = best_report


class MissingOutcome(VistaError):
    pass


class ConfigError(VistaError):
    pass


class IncompatibleSnapshot(VistaError):
    pass
