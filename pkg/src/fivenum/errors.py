"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a function is defined."""


class NumericFailure(ArithmeticError):
    """A numerical routine could not reach its accuracy target or produced
    a value that signals corrupted inputs (negative variance, zero divisor)."""
