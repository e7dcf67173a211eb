"""Exception types shared across the package."""


class PubforgeError(Exception):
    """Base class for all pubforge errors."""


class XmlParseError(PubforgeError):
    def __init__(self, message: str, byte_offset: int | None = None):
        super().__init__(message)
        self.byte_offset = byte_offset


class UnknownEntityError(PubforgeError):
    def __init__(self, entity: str):
        super().__init__(
            f"unknown entity reference &{entity}; "
            "(supply an entity table to resolve non-standard entities)"
        )
        self.entity = entity


class SchemaError(PubforgeError):
    """Tabular input does not match the expected column schema."""


class RowError(PubforgeError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(PubforgeError):
    """Invalid or inconsistent run configuration."""


class FitError(PubforgeError):
    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []


class CohortOutOfRange(PubforgeError):
    """Requested cohort index exceeds the model's usable range."""
