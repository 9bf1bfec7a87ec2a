"""Exception hierarchy shared by every module of the toolkit."""


class AltBMError(Exception):
    """Base class; the CLI maps subclasses onto exit codes."""


class InvalidInput(AltBMError, ValueError):
    pass


class NumericalFailure(AltBMError, ArithmeticError):
    pass


class SingularMatrix(NumericalFailure):
    pass


class InversionDiverged(NumericalFailure):
    pass


class RangeViolation(NumericalFailure):
    pass


class RateTooSmall(InvalidInput):
    pass


class InvalidMap(InvalidInput):
    pass


class OutOfHorizon(InvalidInput):
    pass


class IndexBeyondHorizon(InvalidInput):
    pass


class NoObservations(InvalidInput):
    pass
