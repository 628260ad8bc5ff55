"""
Exception hierarchy for the feedback-capacity toolkit.

Validation problems derive from ``ValueError`` and numerical failures from
``ArithmeticError`` so callers that only know the builtins still catch them.
The CLI maps the two families onto exit codes 2 and 3.
"""

from typing import Optional, Sequence


class FeedcapError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(FeedcapError, ValueError):
    """Input violates a documented precondition."""


class DimensionError(ValidationError):
    """Matrix or vector shapes are inconsistent."""


class UnstableChannelError(ValidationError):
    """Channel state matrix F is not Schur-stable."""


class NonMinimumPhaseError(ValidationError):
    """Zeros of the channel filter (eigenvalues of F - GH) leave the unit disk."""


class NonMinimalRealizationError(ValidationError):
    """Channel realization is uncontrollable or unobservable."""


class DegenerateChannelError(ValidationError):
    """Channel feedthrough is zero, so it cannot be normalized."""


class EigenvalueCollisionError(ValidationError):
    """Encoder and channel share an eigenvalue."""


class UnitCircleError(ValidationError):
    """A matrix has an eigenvalue on the unit circle."""


class HorizonError(ValidationError):
    """Coding horizon too short for the requested epsilon."""


class NumericalError(FeedcapError, ArithmeticError):
    """A numerical routine failed."""


class SingularEquationError(NumericalError):
    """A linear matrix equation has no unique solution."""


class SingularityError(NumericalError):
    """Evaluation point coincides with a pole."""


class ConvergenceError(NumericalError):
    """Iteration stopped before reaching tolerance."""

    def __init__(self, message: str, residual: Optional[float] = None):
        super().__init__(message)
        self.residual = residual


class StabilizationError(NumericalError):
    """Fixed point does not stabilize the closed loop."""


class InfeasibleError(NumericalError):
    """Candidate parameters admit no stabilizing solution."""


class OptimizerError(NumericalError):
    """Optimizer found no finite objective on any branch."""


class BracketError(NumericalError):
    """Root bracket could not be established."""

    def __init__(self, message: str, bracket: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.bracket = tuple(bracket) if bracket is not None else None
