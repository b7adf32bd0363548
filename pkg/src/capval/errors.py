"""Exception hierarchy shared across capval modules."""


class CapvalError(Exception):
    """Base class for all capval errors."""


class ConfigError(CapvalError):
    """Invalid or incomplete configuration (bad paths, missing endpoints, ...)."""


class RangeError(CapvalError):
    """A value fell outside its declared bounds."""


class DuplicateIdError(CapvalError):
    """An id that must be unique appeared twice."""


class SampleParseError(CapvalError):
    """A data file line could not be parsed."""


class IndexBuildError(CapvalError):
    """Corpus index construction failed."""


class EndpointError(CapvalError):
    """An LLM/scoring endpoint failed permanently (retries exhausted or hard error)."""


class TransientEndpointError(EndpointError):
    """A retryable endpoint failure (timeout, connection reset, 5xx)."""


class EmptyCompletionError(EndpointError):
    """The endpoint returned an empty completion."""


class OutputParseError(CapvalError):
    """An LLM completion did not match its output contract.

    Carries the raw completion for audit.
    """

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class EmptyExpansionError(OutputParseError):
    """An expansion completion contained zero valid question blocks."""


class InsufficientDataError(CapvalError):
    """Too few observations for the requested fit."""


class FitError(CapvalError):
    """The optimizer failed to produce a usable fit."""


class OrderingError(CapvalError):
    """A series violated its ordering invariant (e.g. duplicate token counts)."""


class ConsistencyError(CapvalError):
    """Inputs that must agree (same model, same domain) did not."""
