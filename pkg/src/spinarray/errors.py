"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: scenario problems exit with 2,
infeasible plans with 3, numerical failures with 4.
"""


class SpinArrayError(Exception):
    """Base class for all package-specific errors."""


class ScenarioError(SpinArrayError):
    """A scenario document could not be parsed or validated."""


class InfeasiblePlanError(SpinArrayError):
    """The requested resources cannot realize the plan (e.g. too few
    atoms or repetitions for the requested combination)."""


class NumericalFailure(SpinArrayError):
    """A linear-algebra step failed (singular or ill-conditioned matrix,
    covariance factorization)."""
