"""Exception types raised on purpose by surfelio.

Every error this package raises deliberately derives from :class:`SurfelioError`,
so the CLI and the HTTP service can catch a single base type at their boundary
and turn it into a clean message instead of a traceback.
"""


class SurfelioError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(SurfelioError):
    """A file or byte stream does not conform to its declared format."""


class BadMagicError(FormatError):
    """The scan file does not start with the expected magic bytes."""


class BadVersionError(FormatError):
    """The scan file declares a version this reader does not understand."""


class TruncatedFileError(FormatError):
    """The file ended before the declared content was complete."""


class LineFormatError(FormatError):
    """Format error attributable to a specific line of a text file."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ImuCsvError(LineFormatError):
    """Malformed IMU CSV content."""


class TrajectoryFormatError(LineFormatError):
    """Malformed trajectory text content."""


class ConfigError(LineFormatError):
    """Unknown key, unparseable value, or out-of-range setting."""


class ScanValidationError(SurfelioError):
    """Scan content violates a structural invariant (bad ring index, ...)."""


class DegenerateScanError(SurfelioError):
    """Scan geometry is unusable for the requested operation."""


class PropagationError(SurfelioError):
    """IMU stream cannot cover the requested time span."""


class EvaluationError(SurfelioError):
    """Trajectory comparison is impossible (too few matched poses, ...)."""


class ServiceError(SurfelioError):
    """The odometry service rejected a request or is unreachable."""
