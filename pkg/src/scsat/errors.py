"""Exception hierarchy shared by all modules."""


class ScsatError(Exception):
    """Base class for library errors."""


class ParameterError(ScsatError, ValueError):
    """An argument is outside its admissible range."""


class DomainRangeError(ParameterError):
    """A point lies outside the domain of a system function."""


class ModelError(ScsatError):
    """The supplied system or ensemble violates a modelling assumption."""


class NumericError(ScsatError, ArithmeticError):
    """A numerical procedure produced a non-finite or meaningless value."""


class SolverError(NumericError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class BracketError(NumericError):
    """A bisection bracket does not enclose a sign change."""


class InstabilityError(NumericError):
    """A time-marching scheme left the admissible region."""
