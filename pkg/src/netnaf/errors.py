"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or widths passed to an operation are inconsistent."""


class NumericsError(ArithmeticError):
    """A computation produced or received non-finite values."""


class DivergenceError(RuntimeError):
    """Plant state left the trusted region during integration."""

    def __init__(self, time: float, message: str = ""):
        self.time = time
        super().__init__(message or f"plant state diverged at t={time:.6f}s")


class CheckpointFormatError(RuntimeError):
    """Checkpoint file is malformed, truncated, or of the wrong version."""


class ConfigError(ValueError):
    """Experiment configuration is invalid or contains unknown keys."""
