"""Exception types shared across the package."""


class TsmDitherError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(TsmDitherError):
    """Two series disagree in length, sampling, or unit."""


class DegenerateInputError(TsmDitherError):
    """An input has no variance or is otherwise statistically degenerate."""


class InsufficientDataError(TsmDitherError):
    """A computation needs more samples than were provided."""


class InvalidSpecError(TsmDitherError):
    """A trajectory specification fails validation."""


class ConfigurationError(TsmDitherError):
    """A config value is out of range or inconsistent."""


class ShapeError(TsmDitherError):
    """An array input has the wrong shape for a model."""


class SimulationDivergedError(TsmDitherError):
    """The integrator produced a non-finite or unbounded state."""

    def __init__(self, step_index: int, message: str = ""):
        self.step_index = step_index
        super().__init__(message or f"simulation diverged at step {step_index}")


class TrainingDivergedError(TsmDitherError):
    """Training produced a non-finite loss."""
