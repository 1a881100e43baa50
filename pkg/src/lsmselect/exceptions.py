"""Exception and warning classes raised across the package."""


class LSMError(Exception):
    """Base class for all package errors."""


class ValidationError(LSMError, ValueError):
    """Input data violates a structural invariant."""


class DimensionMismatch(ValidationError):
    pass


class AsymmetricAdjacency(ValidationError):
    pass


class NonBinaryEntry(ValidationError):
    """A 0/1 matrix contains another value.

    ``location`` holds the offending (row, column) when known.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SelfLoopPresent(ValidationError):
    pass


class NumericalError(LSMError, ArithmeticError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class SingularHessian(NumericalError):
    pass


class AllEmpty(LSMError):
    """Every entry on a lasso path selected zero covariates."""


class UndefinedAUC(LSMError, ValueError):
    """AUC requested for labels of a single class."""


class AllUndefined(UndefinedAUC):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class HeaderMissing(ParseError):
    pass


class VersionMismatch(LSMError):
    pass


class InsufficientNetworks(LSMError):
    pass


class DegenerateCovariance(UserWarning):
    pass


class NotConverged(UserWarning):
    pass


class ChecksumWarning(UserWarning):
    pass
