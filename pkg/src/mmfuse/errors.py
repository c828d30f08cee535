"""Exception types shared across the package."""


class MMFuseError(Exception):
    """Base class for all package errors."""


class DimensionError(MMFuseError, ValueError):
    pass


class CapacityError(MMFuseError, ValueError):
    pass


class ContractError(MMFuseError, ValueError):
    pass


class ConfigurationError(MMFuseError, ValueError):
    pass


class ValidationError(MMFuseError, ValueError):
    pass


class ParseError(MMFuseError, ValueError):
    pass


class FormatError(MMFuseError, ValueError):
    """Malformed binary or text payload.

    ``offset`` is the byte offset (or character position) where decoding
    failed, when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class VersionError(FormatError):
    pass


class ProviderError(MMFuseError, RuntimeError):
    """All attempts to obtain a token from a provider failed."""

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause


class StorageError(MMFuseError, OSError):
    pass


class StratificationError(MMFuseError, ValueError):
    pass


class TaskError(MMFuseError, ValueError):
    pass


class EvaluationError(MMFuseError, ValueError):
    pass


class MetricError(MMFuseError, ValueError):
    pass
