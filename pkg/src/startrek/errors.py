"""Exception types raised across the package."""


class StarTrekError(Exception):
    """Base class for all package errors."""


class InvalidInput(StarTrekError, ValueError):
    pass


class ConvergenceError(StarTrekError, RuntimeError):
    """Iterative solver stopped at ``max_iter`` without meeting its tolerance."""

    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class DegenerateDenominator(StarTrekError, ValueError):
    def __init__(self, message, index):
        super().__init__(f"{message} (index={index})")
        self.index = index


class InvalidCovariance(StarTrekError, ValueError):
    pass


class ParseError(StarTrekError, ValueError):
    def __init__(self, line, col, reason):
        super().__init__(f"line {line}, column {col}: {reason}")
        self.line = line
        self.col = col
        self.reason = reason


class ShapeError(StarTrekError, ValueError):
    pass


class ZeroVariance(StarTrekError, ValueError):
    def __init__(self, columns):
        super().__init__(f"zero-variance columns: {list(columns)}")
        self.columns = list(columns)


class NegativeUnderLog(StarTrekError, ValueError):
    pass


class ConfigError(StarTrekError, ValueError):
    """Malformed or unknown keys in an experiment config."""
