"""Exception types shared across the package."""


class WardseqError(Exception):
    """Base class for all package errors."""


class ShapeError(WardseqError):
    """Array shapes do not chain for the requested operation."""


class SchemaError(WardseqError):
    """Input data does not match the declared feature schema."""


class RowParseError(WardseqError):
    """A data row could not be parsed; carries the 1-based file line."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConfigError(WardseqError):
    """A configuration value is out of range or inconsistent."""


class MetricUndefinedError(WardseqError):
    """The requested metric is undefined on this input (e.g. one class)."""


class TrainingError(WardseqError):
    """Training aborted; carries epoch and batch index of the failure."""

    def __init__(self, message: str, epoch: int | None = None, batch: int | None = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
