"""Exception types shared across the package.

The CLI maps these onto exit codes: :class:`ValidationError` -> 2,
:class:`DivergenceError` -> 3, ``OSError`` -> 4.
"""


class ValidationError(ValueError):
    """Bad input: wrong shape, missing modality, invalid configuration."""


class DivergenceError(ArithmeticError):
    """A numerical quantity became NaN or infinite."""


class DegenerateModelError(ArithmeticError):
    """A model variance used as a divisor is zero."""
