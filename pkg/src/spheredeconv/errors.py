"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the documented domain (angle range, sign, size)."""


class UnsupportedDimensionError(ValueError):
    """The requested sphere dimension is not supported by this operation."""


class UnsupportedModelError(ValueError):
    """The error model / dimension combination has no implementation."""


class DegreeOverflowError(ValueError):
    """The requested harmonic degree exceeds the validated stability cap."""


class SingularBlockError(ArithmeticError):
    """A rotational transform block is numerically singular.

    Carries the offending degree so callers can shrink the truncation level.
    """

    def __init__(self, degree, message=None):
        self.degree = degree
        super().__init__(message or f"transform block at degree {degree} is numerically singular")
