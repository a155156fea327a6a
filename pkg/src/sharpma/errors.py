"""Exception hierarchy. Everything derives from ValueError so callers can catch broadly."""


class SharpMAError(ValueError):
    pass


class DomainError(SharpMAError):
    """A point lies outside the domain where an operation is defined."""


class GeometryError(SharpMAError):
    """Probe, stencil or sub-triangle placement is geometrically invalid."""


class ConvexityError(SharpMAError):
    """Input that must be convex (node values, boundary data) is not."""


class ParameterError(SharpMAError):
    """A family or solver parameter is outside its admissible range."""


class UnsupportedFamilyError(SharpMAError):
    pass


class ConvergenceError(SharpMAError):
    """Raised when an iterative solve fails; carries the residual history."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class DegeneracyError(ConvergenceError):
    """Picard iteration collapsed to the trivial (zero) discrete solution."""
