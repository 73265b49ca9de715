"""Numeric pipeline stages. Nothing in this package touches the filesystem."""
