"""Exception hierarchy shared across the package."""


class UnderbagError(Exception):
    """Base class for all package errors."""


class ConfigurationError(UnderbagError):
    """Invalid problem instance, scheme parameter, or config-file key."""


class EvaluationFault(UnderbagError):
    """A quadrature integrand produced a non-finite value."""


class DivergenceError(UnderbagError):
    """An iterate left the admissible domain of the fixed-point system."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NonConvergenceError(UnderbagError):
    """Iteration budget exhausted; carries the last state and residual."""

    def __init__(self, message, state=None, residual=None, iterations=None):
        super().__init__(message)
        self.state = state
        self.residual = residual
        self.iterations = iterations


class NoRootError(UnderbagError):
    """A scalar root search found no sign change; carries the scan trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class SchemaError(UnderbagError):
    """A CSV/plan/recipe file does not match its documented schema."""
