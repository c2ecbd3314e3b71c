"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid model structure, hyperparameters, or run configuration."""


class DataError(ValueError):
    """Unreadable, malformed, or dimensionally inconsistent input data."""


class TrainingDiverged(RuntimeError):
    """Training produced a non-finite objective and was aborted."""
