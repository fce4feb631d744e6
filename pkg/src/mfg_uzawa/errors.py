"""Solver exception types shared across the package."""


class SolverError(RuntimeError):
    """Base class for iterative-solver failures."""


class MaxIterationsExceeded(SolverError):
    """Iteration cap hit before the tolerance was met.

    Carries the last residual (and, for outer loops, the trace so far).
    """

    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class BreakdownDetected(SolverError):
    """BiCGStab scalar breakdown persisted after a shadow-vector restart."""


class NonContraction(SolverError):
    """Projected-gradient inner loop is not contracting (step too large)."""


class NonMonotoneCost(SolverError):
    """Density iteration residual jumped; the cost map is not monotone as configured."""


class LineSearchStalled(SolverError):
    """Damped Newton line search could not reduce the residual."""


class Infeasible(SolverError):
    """A-posteriori error bound does not apply: a defining supremum is unbounded."""
