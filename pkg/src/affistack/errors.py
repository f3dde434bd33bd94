"""Exception taxonomy.

The CLI maps these onto process exit codes: ConfigError -> 1, DataError
(and subclasses) -> 2, NumericalError -> 3. Library code raises the most
specific class that applies so callers can react without string matching.
"""

from __future__ import annotations


class AffistackError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AffistackError):
    """Bad run configuration or CLI usage (missing keys, invalid matrix)."""


class DataError(AffistackError):
    """Invalid or inconsistent input data."""


class ParseError(DataError):
    """A file could not be parsed; message carries record/line context."""


class SchemaError(DataError):
    """Inputs do not match an expected schema (columns, widths, ids)."""


class NumericalError(AffistackError):
    """A numerical procedure is undefined or failed (degenerate inputs)."""
