"""
Exception hierarchy for cbfaw.

User-input problems derive from ValidationError (CLI exit code 1), numerical
and runtime failures derive from NumericalError (exit code 2).
"""

from typing import Optional


class CbfawError(Exception):
    """Base class for every error raised by cbfaw."""


class ValidationError(CbfawError):
    """The caller supplied something malformed or inconsistent."""


class DimensionError(ValidationError):
    """Matrix or vector dimensions do not agree."""


class ConfigError(ValidationError):
    """
    A scenario file violates the schema.

    The message is anchored to the offending line when one is known.
    """

    def __init__(
        self, message: str, path: Optional[str] = None, line: Optional[int] = None
    ) -> None:
        self.path = path
        self.line = line
        location = ""
        if path is not None and line is not None:
            location = f"{path}:{line}: "
        elif path is not None:
            location = f"{path}: "
        super().__init__(location + message)


class UnknownScenarioError(ConfigError):
    """The requested scenario name is not one of the bundled fixtures."""


class InvalidStateError(ValidationError):
    """An operation's precondition on its input state or grid does not hold."""


class NumericalError(CbfawError):
    """A numerical procedure failed at run time."""


class EigenvalueConvergenceError(NumericalError):
    """The shifted QR iteration ran out of iterations."""


class SynthesisError(NumericalError):
    """LQR synthesis failed; carries the Riccati residual when available."""

    def __init__(self, message: str, residual: Optional[float] = None) -> None:
        self.residual = residual
        if residual is not None:
            message = f"{message} (Riccati residual {residual:.3e})"
        super().__init__(message)


class ConfigurationError(NumericalError):
    """The controller configuration cannot be used, e.g. K_I K_I^T is singular."""


class QpInfeasibleError(NumericalError):
    """No point satisfies the CBF constraint set."""


class SimulationError(NumericalError):
    """The integration produced a non-finite state."""

    def __init__(self, message: str, step: int) -> None:
        self.step = step
        super().__init__(f"{message} at step {step}")


class VerificationError(CbfawError):
    """One or more acceptance checks failed."""
