"""Exception hierarchy shared across the package."""


class NLGQEError(Exception):
    """Base class for all package errors."""


class DataError(NLGQEError, ValueError):
    """Malformed or out-of-range input data."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SplitError(DataError):
    """A split or fold cannot be formed from the given data."""


class UndefinedMetricError(NLGQEError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero variance)."""


class ConfigError(NLGQEError, ValueError):
    """Invalid configuration key or value."""


class CheckpointError(NLGQEError):
    """Base class for checkpoint loading problems."""


class CorruptCheckpointError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class VocabularyMismatchError(CheckpointError):
    pass
