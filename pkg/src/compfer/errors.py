"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array or frame shapes are inconsistent."""


class ConfigError(ValueError):
    """A configuration value is out of its allowed range."""


class ParseError(ValueError):
    """A byte stream or text file could not be parsed.

    ``offset`` is the byte offset (or row number for CSV input) where parsing
    failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)


class ClassificationError(ValueError):
    """Input cannot be classified, e.g. a GOP with no P-frames."""
