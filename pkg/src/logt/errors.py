"""Exception hierarchy shared by every module of the package."""


class LogtError(Exception):
    """Base class for all library errors."""


class InvalidParams(LogtError, ValueError):
    pass


class DimensionMismatch(LogtError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class ZeroVector(LogtError, ValueError):
    pass


class NonFinite(LogtError, ValueError):
    pass


class NotNormalized(LogtError, ValueError):
    pass


class IndexOutOfRange(LogtError, IndexError):
    pass


class EmptySupport(LogtError, ValueError):
    pass


class NumericalFailure(LogtError, ArithmeticError):
    pass


class NoCascade(LogtError, ValueError):
    pass


class EmptyRelevant(LogtError, ValueError):
    pass


class MalformedFile(LogtError, ValueError):
    pass


class VersionMismatch(LogtError, ValueError):
    pass


class ChecksumFailure(LogtError, ValueError):
    pass
