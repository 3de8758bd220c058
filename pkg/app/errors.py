"""Exception hierarchy shared by the pricer modules."""


class PricerError(Exception):
    """Base class for every failure raised by the pricer."""


class ModelDomainError(PricerError, ValueError):
    """Argument outside the domain of a formula (z = 0, tau <= 0, branch cut, ...)."""


class BracketError(PricerError):
    """A root-finding bracket could not be established."""


class GridError(PricerError, ValueError):
    """Grid construction parameters cannot be satisfied."""


class OutOfDomainError(PricerError, ValueError):
    """Evaluation point lies outside the truncated computational domain."""


class FixedPointError(PricerError):
    """Fixed-point iteration did not meet its stopping criterion."""

    def __init__(self, message: str, iterations: int, last_difference: float):
        super().__init__(message)
        self.iterations = iterations
        self.last_difference = last_difference


class LinearSolverError(PricerError):
    """Base class for Krylov solver failures."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class BreakdownError(LinearSolverError):
    """BiCGSTAB scalar breakdown (rho or omega vanished) persisted after a restart."""


class StagnationError(LinearSolverError):
    """Residual stopped improving before the tolerance was met."""


class MaxIterationsError(LinearSolverError):
    """Iteration budget exhausted."""


class ZeroPivotError(LinearSolverError):
    """Incomplete factorization hit a (near) zero pivot."""

    def __init__(self, row: int, pivot: float):
        super().__init__(f"ILU(0) pivot {pivot:.3e} at row {row}")
        self.row = row
        self.pivot = pivot


class IntegrationAccuracyWarning(UserWarning):
    """Adaptive quadrature stopped before reaching its target tolerance."""

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class QuadratureConvergenceError(PricerError):
    """A series of quadrature contributions did not settle."""
