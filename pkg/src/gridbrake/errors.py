"""Exception types shared across the toolkit."""


class GridBrakeError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(GridBrakeError):
    """A parameter record or base quantity violates its invariants."""


class DomainError(GridBrakeError):
    """An input lies outside an operation's mathematical domain."""


class ValidationError(GridBrakeError):
    """A scenario-level consistency rule is violated (e.g. over-shedding)."""


class ScenarioFormatError(GridBrakeError):
    """A scenario file cannot be parsed or fails validation."""

    def __init__(self, message: str, *, line: int | None = None, key: str | None = None):
        self.line = line
        self.key = key
        loc = []
        if key is not None:
            loc.append(f"key '{key}'")
        if line is not None:
            loc.append(f"line {line}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)


class InitializationError(GridBrakeError):
    """No valid equilibrium could be established for a scenario."""


class SolverError(GridBrakeError):
    """The network solution failed to converge or is singular."""


class NumericError(GridBrakeError):
    """A computation produced non-finite values."""


class RenderError(GridBrakeError):
    """A plot cannot be rendered (missing channel, empty trace)."""
