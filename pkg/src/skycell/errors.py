"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of a function."""


class NumericError(ArithmeticError):
    """A numerical routine failed to converge or overflowed."""


class ApproximationError(NumericError):
    """A fitted approximation is too poor to be trusted."""


class ConfigError(ValueError):
    """A scenario file or command-line option is malformed."""
