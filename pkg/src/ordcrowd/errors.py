"""Exception and warning types raised across the package."""


class OrdCrowdError(Exception):
    """Base class for all package errors."""


# -- data loading -----------------------------------------------------------

class ParseError(OrdCrowdError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateRating(OrdCrowdError, ValueError):
    pass


class InvalidLevel(OrdCrowdError, ValueError):
    pass


class IncompleteCategoryMap(OrdCrowdError, ValueError):
    pass


class UnknownInstance(OrdCrowdError, KeyError):
    pass


# -- numerics ---------------------------------------------------------------

class InvalidVariance(OrdCrowdError, ValueError):
    pass


class InvalidInterval(OrdCrowdError, ValueError):
    pass


class DegenerateMass(OrdCrowdError, ArithmeticError):
    """The Gaussian mass of a bin is too small to compute moments from."""


class InvalidInput(OrdCrowdError, ValueError):
    pass


class InvalidStart(OrdCrowdError, ValueError):
    pass


class CappedShape(UserWarning):
    """Gamma shape estimate hit its upper cap (near-degenerate sample)."""


# -- model fitting ----------------------------------------------------------

class NumericalFailure(OrdCrowdError, ArithmeticError):
    def __init__(self, message, where=None):
        self.where = where
        if where is not None:
            message = f"{message} (at {where})"
        super().__init__(message)


class FitFailed(OrdCrowdError, RuntimeError):
    def __init__(self, message, diagnostics=()):
        self.diagnostics = list(diagnostics)
        super().__init__(message)


class NoRatings(OrdCrowdError, ValueError):
    pass


class InvalidCode(OrdCrowdError, ValueError):
    pass


# -- evaluation -------------------------------------------------------------

class UndefinedCorrelation(OrdCrowdError, ValueError):
    pass
