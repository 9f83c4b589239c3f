"""Exception types shared across the library."""


class MVSDEError(Exception):
    """Base class for all library errors."""


class ConfigurationError(MVSDEError):
    """Invalid model name, parameter combination, or grid incompatibility."""


class DivergenceError(MVSDEError):
    """A computation produced non-finite values (scheme blow-up)."""

    def __init__(self, message, particle=None, step=None):
        super().__init__(message)
        self.particle = particle
        self.step = step


class SolverError(MVSDEError):
    """Implicit-stage solver failed after all fallbacks."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class FitError(MVSDEError):
    """Not enough usable rows to fit a convergence rate."""
