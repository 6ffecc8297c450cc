"""Exception hierarchy shared by all subpackages."""


class PHTurnpikeError(Exception):
    """Base class for every error raised by this package."""


class StructureError(PHTurnpikeError, ValueError):
    """Input matrix has the wrong shape or symmetry."""


class NotPSDError(PHTurnpikeError, ValueError):
    """Matrix has an eigenvalue below the clamp threshold."""


class SingularSystemError(PHTurnpikeError, ArithmeticError):
    """Linear system is numerically singular (condition estimate too large)."""


class EvaluationError(PHTurnpikeError, ArithmeticError):
    """A user map produced non-finite values."""


class DimensionError(PHTurnpikeError, ValueError):
    """Vector or matrix dimensions do not match the system."""


class DegeneratePointError(PHTurnpikeError, ArithmeticError):
    """Every singular value of Df is below the rank threshold."""


class InconclusiveCertificateError(PHTurnpikeError):
    """No sample landed inside the shell around the manifold."""


class IntegrationError(PHTurnpikeError, ArithmeticError):
    """Implicit step failed; ``step`` holds the interval index."""

    def __init__(self, message, step):
        super().__init__(f"step {step}: {message}")
        self.step = step


class ConfigError(PHTurnpikeError, ValueError):
    """Run configuration is invalid."""
