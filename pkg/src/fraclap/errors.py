"""Exception hierarchy shared by all modules."""


class FracLapError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(FracLapError, ValueError):
    pass


class DimensionError(FracLapError, ValueError):
    pass


class DomainError(FracLapError, ValueError):
    pass


class ContractError(FracLapError, ValueError):
    pass


class NumericError(FracLapError, ArithmeticError):
    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class SingularityError(FracLapError, ZeroDivisionError):
    pass


class ResourceError(FracLapError, MemoryError):
    pass


class ScaleError(FracLapError, OverflowError):
    pass
