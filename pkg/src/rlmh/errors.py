"""Exception hierarchy shared across the package."""


class RlmhError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(RlmhError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class NotSpd(RlmhError, ValueError):
    pass


class NotSymmetric(RlmhError, ValueError):
    pass


class NonFinite(RlmhError, FloatingPointError):
    pass


class InvalidParameter(RlmhError, ValueError):
    pass


class InvalidLayout(InvalidParameter):
    pass


class MalformedData(RlmhError, ValueError):
    pass


class EmptyData(MalformedData):
    pass


class IncompleteTransition(RlmhError, ValueError):
    pass


class OutOfRange(RlmhError, ValueError):
    pass


class DegenerateCovariance(RlmhError, ValueError):
    pass


class NonConvergence(RlmhError, RuntimeError):
    pass


class BufferTooSmall(RlmhError, RuntimeError):
    pass


class InsufficientData(RlmhError, RuntimeError):
    pass


class TooFewSamples(RlmhError, ValueError):
    pass


class DegenerateLengthscale(RlmhError, ValueError):
    pass


class WindowTooLarge(RlmhError, ValueError):
    pass


class UnsupportedDimension(RlmhError, ValueError):
    pass


class ConfigError(RlmhError, ValueError):
    """Raised for any problem with a run configuration document.

    ``key`` names the offending entry when one can be identified.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message)
        self.key = key


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass


class CatastrophicFailure(RlmhError, RuntimeError):
    """Training diverged in a way the harness treats as a failed replicate."""

    def __init__(self, reason: str, iteration: int):
        super().__init__(f"{reason} (iteration {iteration})")
        self.reason = reason
        self.iteration = iteration
