"""Exception types shared across the engine."""


class ConfigError(ValueError):
    """A configuration value or input file is invalid."""


class CalibrationError(RuntimeError):
    """The transition-matrix calibration could not produce a valid result."""


class MarginalInfeasibleError(RuntimeError):
    """A dependence construction cannot satisfy the marginal row constraints."""

    def __init__(self, message: str, member: int | None = None, direction: str | None = None):
        super().__init__(message)
        self.member = member
        self.direction = direction
