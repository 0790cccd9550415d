class SmallBallLabError(Exception):
    """Base class of all errors raised by the library."""


class DomainError(SmallBallLabError, ValueError):
    """A numeric argument is outside the domain of an operation."""


class ConstructionError(SmallBallLabError, ValueError):
    """Invalid model parameters, or a construction invariant failed to hold."""


class BudgetExceededError(SmallBallLabError, RuntimeError):
    """A request would materialize more values than the configured budget."""


class ChainDepthError(DomainError):
    """The partition chain is too shallow for the requested scale."""

    def __init__(self, message: str, required_depth: int | None = None):
        super().__init__(message)
        self.required_depth = required_depth


class ConfigError(SmallBallLabError, ValueError):
    """Experiment configuration does not match the schema."""

    def __init__(self, field: str, message: str):
        super().__init__(f"Config field '{field}': {message}")
        self.field = field
