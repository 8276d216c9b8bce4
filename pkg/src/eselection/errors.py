"""Exception hierarchy shared by all modules."""


class ESelectionError(Exception):
    """Base class for every error raised by this package."""


class InputShapeError(ESelectionError, ValueError):
    pass


class DataError(ESelectionError, ValueError):
    pass


class IngestError(DataError):
    """Malformed input file. Carries the offending 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ParameterError(ESelectionError, ValueError):
    pass


class DegenerateScaleError(ParameterError):
    pass


class OutOfRangeError(ESelectionError, ValueError):
    pass


class SequencingError(ESelectionError, ValueError):
    pass


class InsufficientHistoryError(ESelectionError):
    """Raised when a rolling quantity is requested before the window is full."""


class ConfigError(ESelectionError, ValueError):
    pass
