"""Exception types shared across the package."""


class PolyrfError(Exception):
    """Base class for all package errors."""


class InputShapeError(PolyrfError, ValueError):
    pass


class InsufficientDataError(PolyrfError, ValueError):
    pass


class ParameterError(PolyrfError, ValueError):
    pass


class TrainingError(PolyrfError, RuntimeError):
    """Training diverged (non-finite loss)."""
