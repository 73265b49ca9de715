"""Placeholder test file."""

# This file ensures tests/ directory is recognized as a Python package
