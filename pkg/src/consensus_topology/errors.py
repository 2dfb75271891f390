"""Exception hierarchy shared across the package."""


class TopologyError(Exception):
    """Base class for all package-specific errors."""


class ConnectivityError(TopologyError):
    """No connected random graph was found within the retry budget."""


class SymmetryError(TopologyError, ValueError):
    """A matrix that must be symmetric is not."""


class DimensionError(TopologyError, ValueError):
    """Array shapes do not match."""


class ParseError(TopologyError, ValueError):
    """A graph or data file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RateError(TopologyError, ValueError):
    """A consensus step size lies outside (0, 1/lambda_max)."""


class ZeroParamError(TopologyError, ValueError):
    """Sub-exponential tail bound is ill-defined for zero parameters."""


class DomainError(TopologyError, ValueError):
    """An argument lies outside the domain of a closed-form bound."""


class ZeroMatrixError(TopologyError, ValueError):
    """A rescaling was requested for an all-zero matrix."""


class InfeasibleError(TopologyError):
    """The recovery program has no feasible point at the requested epsilon1."""

    def __init__(self, message, min_epsilon1=None):
        self.min_epsilon1 = min_epsilon1
        super().__init__(message)


class NonConvergenceError(TopologyError):
    """The first-order solver hit its iteration cap."""

    def __init__(self, message, iterations=None, primal_residual=None, dual_residual=None):
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        super().__init__(message)


class SearchError(TopologyError):
    """The epsilon1 search bracket does not contain a feasible value."""
