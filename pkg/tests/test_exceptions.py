"""Tests for domain exceptions."""

import pytest

from mctk.domain.exceptions import (
    CacheError,
    ConfigurationError,
    ContainerFormatError,
    FormatError,
    MctkError,
    NonFiniteError,
    NumericError,
    RecipeError,
    SchemaError,
    ShapeError,
    UsageError,
)


def test_mctk_error():
    """Test base MctkError."""
    error = MctkError("Test error")
    assert str(error) == "Test error"
    assert error.exit_code == 1


@pytest.mark.parametrize(
    "cls,code",
    [
        (UsageError, 2),
        (ConfigurationError, 2),
        (RecipeError, 2),
        (FormatError, 3),
        (NumericError, 4),
        (ShapeError, 4),
        (CacheError, 4),
    ],
)
def test_exit_codes(cls, code):
    """Test that each error family maps to its exit code."""
    error = cls("failed")
    assert error.exit_code == code
    assert isinstance(error, MctkError)


def test_container_format_error_offset():
    """Test ContainerFormatError with a byte offset."""
    error = ContainerFormatError("bad magic", 0)
    assert str(error) == "bad magic (at byte offset 0)"
    assert error.offset == 0
    assert error.exit_code == 3


def test_schema_error_field():
    """Test SchemaError with and without a field path."""
    error = SchemaError("expected a number", field="frames[3].jaw_spectre")
    assert str(error) == "frames[3].jaw_spectre: expected a number"
    assert error.field == "frames[3].jaw_spectre"
    assert isinstance(error, FormatError)
    assert SchemaError("plain").field is None


def test_non_finite_error_index():
    """Test NonFiniteError with the offending index."""
    error = NonFiniteError("NaN in input", index=5)
    assert error.index == 5
    assert isinstance(error, NumericError)
