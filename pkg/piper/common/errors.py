"""
Exception hierarchy for the package.
"""
from typing import Any, Dict, List, Optional


class PiperError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(PiperError, ValueError):
    """A caller broke a precondition: wrong shape, bad argument, invalid state."""


class ModelValidationError(ContractViolation):
    """A chain model description violates the model invariants."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        self.field = field
        self.line = line
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field is not None:
            location.append(f"field '{field}'")
        prefix = f"{', '.join(location)}: " if location else ""
        super().__init__(f"{prefix}{message}")


class ConfigError(ContractViolation):
    """Invalid experiment configuration. Carries one message per offending field."""

    def __init__(self, problems: List[str]):
        self.problems = list(problems)
        super().__init__("Invalid configuration: " + "; ".join(self.problems))


class DynamicsInvariantError(PiperError, RuntimeError):
    """Internal error: the mass matrix could not be factorized."""


class SimulationDivergedError(PiperError, RuntimeError):
    """The simulator produced a non-finite state."""


class TrainingAbortedError(PiperError, RuntimeError):
    """A training loss became non-finite."""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
