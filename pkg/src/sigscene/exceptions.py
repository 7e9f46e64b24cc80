"""Exception hierarchy shared by all sigscene modules."""


class SigsceneError(Exception):
    """Base class for every error raised by this package."""


class ZeroVector(SigsceneError, ValueError):
    """A vector whose norm is too small to define a direction."""


class DimMismatch(SigsceneError, ValueError):
    pass


class EmptyGrid(SigsceneError, ValueError):
    pass


class TooFewSamples(SigsceneError, ValueError):
    pass


class DegenerateSample(SigsceneError, ValueError):
    """Sample standard deviation is numerically zero."""


class InvalidParam(SigsceneError, ValueError):
    pass


class DegenerateGeometry(SigsceneError, ValueError):
    pass


class IdMismatch(SigsceneError, ValueError):
    pass


class SeparationInfeasible(SigsceneError, RuntimeError):
    """Scene centers could not be placed at the requested separation."""


class FormatError(SigsceneError, ValueError):
    """Malformed input file; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
