"""Shared exception types.

Every failure mode the library promises to detect maps to one class here so
callers (and the CLI) can branch on type rather than message text.
"""


class RiclError(Exception):
    """Base class for all library-specific failures."""


class ShapeMismatch(RiclError, ValueError):
    """Operands have incompatible or non-conforming shapes."""


class SingularSystem(RiclError, ArithmeticError):
    """A linear system is numerically singular and no ridge was requested."""


class PreconditionViolation(RiclError, ValueError):
    """An input violates a documented analytic precondition (e.g. R <= 4)."""


class NegativeWeight(RiclError, ValueError):
    """A weight that must be nonnegative (square-rooted or lifted) is negative."""


class DivergenceDetected(RiclError, ArithmeticError):
    """Training produced a non-finite loss or iterate.

    Carries the outer-step index at which divergence was observed.
    """

    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"divergence detected at outer step {step}")


class SchemaError(RiclError, ValueError):
    """A CSV/series input does not match the documented schema."""


class EmptySeries(RiclError, ValueError):
    """A plot filter matched zero rows."""
