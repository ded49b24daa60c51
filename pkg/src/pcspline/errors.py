"""Exception types shared across the package."""


class PCSplineError(Exception):
    """Base class for all package errors."""

    code = 1


class InvalidArgumentsError(PCSplineError, ValueError):
    code = 2


class OutOfRangeError(PCSplineError, ValueError):
    """A value lies outside the attainable interval of a mapping."""

    code = 3

    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class DesignSingularError(PCSplineError, ValueError):
    code = 4


class NotPositiveDefiniteError(PCSplineError, ValueError):
    code = 5


class RankDeficientConstraintsError(PCSplineError, ValueError):
    code = 6
