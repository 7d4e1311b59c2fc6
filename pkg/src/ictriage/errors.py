"""Exception hierarchy shared across the package.

Every error a caller is expected to branch on gets its own class; generic
misuse keeps raising ValueError/TypeError as usual.
"""


class IctriageError(Exception):
    """Base class for package-specific errors."""


class FormatError(IctriageError):
    """File does not look like the format it claims to be."""


class IntegrityError(IctriageError):
    """File structure is recognized but internally inconsistent."""


class EdfParseError(IctriageError):
    """EDF header or record structure cannot be parsed."""


class CalibrationError(IctriageError):
    """EDF signal calibration is degenerate (physical_max == physical_min)."""


class ParameterError(IctriageError):
    """An argument violates a documented precondition."""


class RankError(IctriageError):
    """Covariance rank is below the requested component count."""


class DivergenceError(IctriageError):
    """Iterative fit diverged even after learning-rate restarts."""


class ShapeError(IctriageError):
    """Array shape does not match the model it is used with."""


class GeometryError(IctriageError):
    """Electrode geometry is insufficient for interpolation."""


class CompositionError(IctriageError):
    """Dashboard composition is missing a required panel."""


class ResponseParseError(IctriageError):
    """Backend reply carries no usable structured object."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TransportError(IctriageError):
    """Request could not be completed (network failure or timeout)."""


class RateLimitedError(TransportError):
    """Backend answered 429; the request may be retried."""


class ServerError(TransportError):
    """Backend answered 5xx; the request may be retried."""


class ClientRequestError(TransportError):
    """Backend answered a non-retryable 4xx."""


class ConfigurationError(IctriageError):
    """Run or backend configuration is invalid; nothing was dispatched."""


class OracleLookupError(IctriageError):
    """Ground-truth map has no entry for the requested component."""


class OverrideError(IctriageError):
    """Override file references components that do not exist."""


class AlignmentError(IctriageError):
    """Two label sets do not cover the same component keys."""


class CapacityError(IctriageError):
    """More synthetic sources requested than the montage can carry."""


class StageError(IctriageError):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage={stage}: {message}")
        self.stage = stage
