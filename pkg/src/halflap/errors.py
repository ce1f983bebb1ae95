"""Exception hierarchy shared by all halflap modules."""


class HalflapError(Exception):
    """Base class for every error raised by the package."""


class InvalidFieldError(HalflapError, ValueError):
    """A field contains NaN/Inf or does not match its grid."""


class DomainError(HalflapError, ValueError):
    """An argument lies outside the domain of an operation."""


class MagnitudeError(HalflapError, OverflowError):
    """An exponential nonlinearity would overflow double precision."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class ToleranceNotMetError(HalflapError):
    """Quadrature finished without reaching the requested accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ResolutionError(HalflapError, ValueError):
    """The grid is too coarse for the requested object."""


class ConvergenceError(HalflapError):
    """An iterative method stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history if history is not None else []


class UnboundedRayError(HalflapError):
    """The energy along a ray grows without a finite maximiser."""


class GeometryError(HalflapError):
    """The fibering map violates the one-sign-change shape."""


class TrivialLimitError(HalflapError):
    """A descent collapsed onto the zero critical point."""


class DeformationStallError(ConvergenceError):
    """The mountain-pass path level kept increasing."""


class ConfigError(HalflapError, ValueError):
    """Aggregated configuration problems."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
