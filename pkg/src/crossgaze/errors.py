"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class StateError(RuntimeError):
    """An operation was invoked before its required state existed."""


class InputError(ValueError):
    """A runtime input is outside its documented domain."""


class DegenerateDirectionError(ValueError):
    """A direction vector is too close to zero to normalize."""


class MetricError(ValueError):
    """A metric is undefined for the given inputs."""


class GenerationError(RuntimeError):
    """Scene generation could not satisfy its constraints."""


class TrainingDiverged(RuntimeError):
    """Training produced non-finite values; message names the first bad tensor."""


class FormatError(ValueError):
    """A binary file does not conform to its container format.

    Carries the byte offset where parsing failed.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
