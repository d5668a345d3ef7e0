"""Exception types shared across the solver stack."""


class FracipError(Exception):
    """Base class for all fracip errors."""


class DimensionMismatch(FracipError):
    """Operands have incompatible shapes."""


class SingularToWorkingPrecision(FracipError):
    """A pivot could not be chosen above the working-precision threshold."""


class DegenerateElement(FracipError):
    """Element Jacobian determinant is non-positive."""


class InvalidRefinement(FracipError):
    """Requested critical element size cannot be meshed."""


class DegenerateMeasure(FracipError):
    """Duality measure vanished where a ratio of measures is required."""


class ZeroGap(FracipError):
    """An unmasked constraint gap underflowed to zero."""


class StabilizationOverflow(FracipError):
    """Inertia correction exceeded its upper bound without success."""


class MaxIterationsExceeded(FracipError):
    """An iterative solver hit its iteration budget.

    Carries a ``diagnostics`` dict with the residual trace of the failed solve.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ParseError(FracipError):
    """Configuration file could not be parsed."""


class ValidationError(FracipError):
    """Configuration value failed validation; message carries the field path."""
