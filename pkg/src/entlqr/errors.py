"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 2,
``ValidationFailed`` -> 3, ``NumericalError`` -> 4.
"""


class LQRError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(LQRError, ValueError):
    """Matrix dimensions or grids are mutually inconsistent."""


class ConfigError(LQRError):
    """A configuration file could not be read or parsed."""


class ValidationFailed(LQRError):
    """A model violates one of the standing assumptions."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations)
        super().__init__(f"model is not admissible: {lines}")


class ContractError(LQRError, ValueError):
    """Arguments are well-formed but break an operation's precondition."""


class NumericalError(LQRError):
    """Base class for failures during a numerical solve."""


class InversionError(NumericalError):
    """A matrix that must be inverted is singular or badly conditioned."""


class DivergenceError(NumericalError):
    """Integration produced NaN or overflow."""

    def __init__(self, node, time):
        self.node = node
        self.time = time
        super().__init__(f"integration diverged at node {node} (t={time:.6g})")


class LogDetError(NumericalError):
    """A covariance determinant is not strictly positive."""


class DegenerateDensityError(NumericalError):
    """A precision matrix is singular so the Gaussian density is undefined."""


class BlowUpError(NumericalError):
    """A closed-form scalar Riccati solution blows up inside the horizon."""


class DiagnosticWindowError(LQRError):
    """Too few usable iterations to compute a convergence-rate diagnostic."""


class InfeasiblePerturbationError(LQRError):
    """A perturbed model can no longer satisfy the regularity conditions."""
