"""Exception types raised by the library."""


class DiroptError(Exception):
    """Base class for all library errors."""


class NotStronglyConnected(DiroptError):
    pass


class NoConvergence(DiroptError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BoostFailed(DiroptError):
    pass


class DegenerateConstraint(DiroptError):
    pass


class RangeTooNarrow(DiroptError):
    pass


class InfeasibleInstance(DiroptError):
    pass


class DimensionMismatch(DiroptError):
    pass


class SingularSystem(DiroptError):
    pass


class TraceTooShort(DiroptError):
    pass


class NonFiniteIterate(DiroptError):
    """Iterates left the finite range; ``trace`` holds the records gathered so far."""

    def __init__(self, message, t=None, trace=None):
        super().__init__(message)
        self.t = t
        self.trace = trace if trace is not None else []


class ConfigError(DiroptError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
