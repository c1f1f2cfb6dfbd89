"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Non-finite or malformed numeric input."""


class DomainError(ValueError):
    """Point lies on or outside the Poincare ball."""


class ShapeError(ValueError):
    """Dimension mismatch between operands."""


class InsufficientDataError(ValueError):
    """Too few samples for the requested operation."""


class ConfigError(ValueError):
    """Invalid configuration value."""


class ProtocolError(RuntimeError):
    """An environment was driven outside its allowed transitions."""


class UsageError(RuntimeError):
    """API called in the wrong order or mode."""


class NumericOverflowError(ArithmeticError):
    """Activations became non-finite during a forward pass."""


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(ValueError):
    """Duplicate or conflicting records in an input file."""
