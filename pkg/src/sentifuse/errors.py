"""Exception types shared across the package."""


class SentifuseError(Exception):
    """Base class for all package errors."""


class DimensionError(SentifuseError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(SentifuseError, ValueError):
    """A documented precondition was violated."""


class DegenerateVectorError(SentifuseError, ValueError):
    """A vector with zero norm was given where a direction is required."""


class ConfigError(SentifuseError, ValueError):
    """Invalid configuration value or combination."""


class SpecError(SentifuseError, ValueError):
    """A model specification is internally inconsistent."""


class ParseError(SentifuseError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FeatureLookupError(SentifuseError, LookupError):
    """A referenced feature vector id is missing from the feature file."""
