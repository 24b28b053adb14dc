"""Exception types shared across the package."""


class FreqAlignError(Exception):
    """Base class for all package errors."""


class ShapeError(FreqAlignError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class ConfigError(FreqAlignError, ValueError):
    """A configuration value is out of range or unknown."""


class ContractError(FreqAlignError, ValueError):
    """An input violates a documented precondition (range, binarity, sign)."""


class UsageError(FreqAlignError, RuntimeError):
    """The API was called in an unsupported order or state."""


class NumericalError(FreqAlignError, ArithmeticError):
    """A computation produced NaN or exceeded a consistency threshold."""


class DataError(FreqAlignError, ValueError):
    """A file on disk is missing, unreadable, or malformed."""
