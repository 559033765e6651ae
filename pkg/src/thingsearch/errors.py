"""Exception types shared across the package."""


class ThingSearchError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(ThingSearchError, ValueError):
    """A box, polygon or region has invalid or degenerate geometry."""


class ConfigError(ThingSearchError, ValueError):
    """An operation is missing a required input or option."""


class InsufficientDataError(ThingSearchError, ValueError):
    """Too few samples to fit the requested model."""


class ParseError(ThingSearchError, ValueError):
    """A statement failed to parse.

    Carries the offending token and its word position so callers can point
    at the exact spot; ``line`` is filled in by multi-line ingestion.
    """

    def __init__(self, message: str, token: str | None = None,
                 position: int | None = None, line: int | None = None):
        super().__init__(message)
        self.token = token
        self.position = position
        self.line = line

    def __str__(self) -> str:
        prefix = f"line {self.line}: " if self.line is not None else ""
        return prefix + super().__str__()


class ModelIOError(ThingSearchError, ValueError):
    """A persisted data or model file is malformed, corrupt or the wrong version."""
