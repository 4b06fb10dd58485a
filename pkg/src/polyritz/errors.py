"""Exception hierarchy shared by all modules."""


class PolyritzError(Exception):
    """Base class for every error raised by the package."""


class ParameterError(PolyritzError, ValueError):
    """An argument is outside the range an operation accepts."""


class DescriptorError(ParameterError):
    """An eigenfunction label does not belong to the manifold it was used with."""


class DomainError(ParameterError):
    """A complex argument lies outside the half plane of absolute convergence."""


class PreconditionError(ParameterError):
    """Input data violate a documented precondition."""


class NumericalError(PolyritzError, ArithmeticError):
    """A computation failed at working precision."""


class NotPositiveDefiniteError(NumericalError):
    def __init__(self, pivot, value):
        self.pivot = pivot
        self.value = value
        super().__init__(f"matrix is not positive definite (pivot {pivot}, value {value:.3e})")


class MassMatrixError(NumericalError):
    """The mass matrix of a pencil has a significantly negative eigenvalue."""


class ConditioningError(NumericalError):
    def __init__(self, message, condition_estimate=None, residual=None):
        self.condition_estimate = condition_estimate
        self.residual = residual
        super().__init__(message)


class DegenerateSpectrumError(NumericalError):
    """No Ritz value survives the zero-mode threshold."""
