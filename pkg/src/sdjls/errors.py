"""Exception types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any


class SdjlsError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteError(SdjlsError):
    """An input or intermediate quantity contained NaN or Inf."""


class DimensionMismatchError(SdjlsError):
    """Array arguments have inconsistent shapes."""


class NoConvergenceError(SdjlsError):
    """An iterative eigenvalue computation exceeded its iteration cap."""


class InvalidProblemError(SdjlsError):
    """A feasibility problem is structurally inconsistent."""


class MissingBlockError(SdjlsError):
    """An assignment does not cover every declared variable block."""


class NoInputError(SdjlsError):
    """Synthesis was requested for a model without control inputs."""


class SingularXError(SdjlsError):
    """A synthesis variable block is numerically singular."""


class AbsorbingModeError(SdjlsError):
    """A mode draw was requested from a mode with zero exit rate."""


@dataclass
class DivergenceInfo:
    """Where a simulated path blew past the overflow cap."""

    time: float
    norm: float


class OverflowDivergence(SdjlsError):
    """State norm exceeded the overflow cap during simulation.

    Reported as divergence, never as a region exit.
    """

    def __init__(self, time: float, norm: float):
        super().__init__(f"state norm {norm:.3e} exceeded cap at t={time:.6g}")
        self.info = DivergenceInfo(time=time, norm=norm)


@dataclass
class Violation:
    """One structured model-validation failure."""

    kind: str
    message: str
    details: dict[str, Any] = field(default_factory=dict)

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


class ModelValidationError(SdjlsError):
    """Raised by model validation; carries the full violation list."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        summary = "; ".join(str(v) for v in violations)
        super().__init__(f"{len(violations)} violation(s): {summary}")
