"""Exception types shared across the package."""


class PricePartsError(Exception):
    """Base class for errors raised by this package."""


class SchemaError(PricePartsError, ValueError):
    """A table or file does not match its declared schema."""


class ParseError(PricePartsError, ValueError):
    """A cell could not be parsed. Carries row/column context when known."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


class ValidationError(PricePartsError, ValueError):
    """An argument or configuration value is out of its allowed range."""


class ConfigError(PricePartsError, ValueError):
    """A run configuration file or flag set is malformed."""
