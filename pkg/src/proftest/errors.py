"""Exception hierarchy.

Input problems derive from :class:`InputError` and numerical failures from
:class:`NumericalError`; the CLI maps the two families to distinct exit codes.
"""


class ProftestError(Exception):
    """Base class for all package errors."""


class InputError(ProftestError, ValueError):
    """Malformed or inconsistent user input."""


class DimensionError(InputError):
    """Array shapes do not agree with the study design."""


class DomainError(InputError):
    """Argument outside the mathematical domain of a function."""


class RankError(InputError):
    """Constraint matrix is rank deficient."""


class NumericalError(ProftestError, ArithmeticError):
    """Numerical failure during estimation or inference."""


class NumericOverflowError(NumericalError):
    """A non-finite intermediate value was produced."""


class SingularDesignError(NumericalError):
    """The M-step normal equations are degenerate for some laboratory."""

    def __init__(self, lab, message=None):
        self.lab = lab
        super().__init__(message or f"singular design: M-step denominator vanishes for lab {lab}")


class SingularInformationError(NumericalError):
    """The (bias block of the) information matrix cannot be inverted reliably."""
