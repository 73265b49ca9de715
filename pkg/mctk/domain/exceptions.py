"""Domain-level exceptions for mctk.

Every exception carries the process exit code the CLI reports for it.
"""

from typing import Optional


class MctkError(Exception):
    """Base exception for all mctk errors."""

    exit_code = 1


class UsageError(MctkError):
    """Raised for bad flag values or missing inputs."""

    exit_code = 2


class ConfigurationError(UsageError):
    """Raised when configuration is invalid or unreadable."""

    pass


class RecipeError(UsageError):
    """Raised when a recombination recipe cannot be resolved."""

    pass


class FormatError(MctkError):
    """Raised when an input file is malformed."""

    exit_code = 3


class ContainerFormatError(FormatError):
    """Raised when an MCTK container cannot be parsed."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class SchemaError(FormatError):
    """Raised when a JSON document violates its schema."""

    def __init__(self, message: str, field: Optional[str] = None) -> None:
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class NumericError(MctkError):
    """Raised when a numeric contract is violated."""

    exit_code = 4


class ShapeError(NumericError):
    """Raised when tensor dimensions do not compose."""

    pass


class NonFiniteError(NumericError):
    """Raised when a NaN or Inf appears where finite values are required."""

    def __init__(self, message: str, index: Optional[int] = None) -> None:
        super().__init__(message)
        self.index = index


class CacheError(NumericError):
    """Raised when a backward pass gets a missing or stale forward cache."""

    pass
