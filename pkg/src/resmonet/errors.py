"""Exception types shared across the package.

Every validation failure raises a named error so callers (and the CLI) can
report exactly which contract was violated instead of a bare ValueError.
"""


class DimensionError(ValueError):
    """Shapes are inconsistent; the message names the offending axis."""


class ConfigError(ValueError):
    """A hyperparameter or option is out of its documented range."""


class StateError(RuntimeError):
    """An operation was invoked without the state it needs (e.g. no cache)."""


class GraphError(ValueError):
    """A layer graph failed validation (unresolved input, bad shape, ...)."""


class WeightFormatError(ValueError):
    """Weight file has a bad magic number or unsupported version."""


class WeightTruncationError(ValueError):
    """Weight file ended before the declared payload was read."""


class WeightShapeError(ValueError):
    """Stored tensor shapes do not match what the graph expects."""


class RangeError(ValueError):
    """A coordinate or window falls outside the valid region."""


class DataError(ValueError):
    """Dataset loading failed fatally (e.g. no class directories)."""


class MeasurementError(RuntimeError):
    """A profiling run produced no usable samples."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries epoch/batch context."""


class DecodeError(ValueError):
    """A wire payload failed to parse; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class AuthError(Exception):
    """Credentials or token rejected."""


class NotFound(KeyError):
    """A referenced session or patient does not exist."""
