"""Exception types shared across the package."""


class GwError(Exception):
    """Base class for all package errors."""


class ConfigError(GwError, ValueError):
    """Invalid sampler, solver or scenario parameters.

    ``field`` names the offending key when known.
    """

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)


class DomainError(GwError, ValueError):
    """Inputs outside an operation's domain (shape mismatch, bad marginals, ...)."""


class ConstructionError(GwError, RuntimeError):
    """A randomized construction could not be completed within its budget."""

    def __init__(self, message: str, achieved: int):
        self.achieved = achieved
        super().__init__(f"{message} (placed {achieved} points)")


class ScenarioError(GwError, RuntimeError):
    """A replication failed; carries the seed path needed to reproduce it."""

    def __init__(self, message: str, seed_path: tuple):
        self.seed_path = seed_path
        super().__init__(f"{message} [seed path {seed_path}]")
