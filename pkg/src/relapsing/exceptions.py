"""Exception hierarchy.

The CLI maps these onto exit codes: validation problems -> 2,
failed internal cross-checks -> 3, numerical non-convergence -> 4.
"""

from __future__ import annotations


class RelapsingError(Exception):
    """Base class for all package errors."""


class InvalidParametersError(RelapsingError, ValueError):
    """Raised when parameters violate a structural or modelling constraint."""

    def __init__(self, findings):
        self.findings = list(findings)
        text = "; ".join(str(f) for f in self.findings) or "invalid parameters"
        super().__init__(text)


class DegeneratePopulationError(RelapsingError, ValueError):
    """Total host population is zero; the transmission terms divide by N."""


class CrossCheckError(RelapsingError, ArithmeticError):
    """Two independent computations of the same quantity disagree."""


class ConvergenceError(RelapsingError, ArithmeticError):
    """An iterative method hit its iteration cap or step-size floor."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class NegativityError(RelapsingError, ArithmeticError):
    """An integrated compartment dropped below the clamp threshold."""
