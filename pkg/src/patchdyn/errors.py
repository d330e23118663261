"""Exception types raised across the package."""


class PatchDynError(Exception):
    """Base class for all package errors."""


class NonPositiveJacobian(PatchDynError, ValueError):
    """The coordinate mapping is folded or degenerate somewhere."""


class DerivativeMismatch(PatchDynError, ValueError):
    """Declared analytic mapping derivatives disagree with finite differences."""


class StabilityViolation(PatchDynError, ValueError):
    """An explicit micro integrator was configured outside its stability range."""

    def __init__(self, number, limit=0.5):
        self.number = float(number)
        self.limit = limit
        super().__init__(
            f"diffusive stability number {self.number:.4g} exceeds {limit}"
        )


class MixedTermUnsupported(PatchDynError, ValueError):
    """The ADI integrator cannot handle a non-zero cross-derivative term."""


class InsufficientStencil(PatchDynError, IndexError):
    """Not enough upstream nodes for the requested upwind stencil."""


class IndexOutOfRange(PatchDynError, IndexError):
    """A patch stencil was requested at a non-interior coarse node."""


class ShapeMismatch(PatchDynError, ValueError):
    """Two coarse fields that should align do not."""


class InvalidStretch(PatchDynError, ValueError):
    """Stretching parameter outside [0, 1)."""


class DomainError(PatchDynError, ValueError):
    """Special function evaluated outside its domain."""


class RootBracketFailure(PatchDynError, RuntimeError):
    """Sign-change scan did not find the expected number of roots."""


class SeriesTruncationWarning(UserWarning):
    """The last retained series term is not negligible."""


class GridMismatch(PatchDynError, ValueError):
    """Two trajectories are not a coarse/2x-refined pair."""


class MacroInstability(PatchDynError, ArithmeticError):
    """The coarse projective integration diverged."""


class MicroSolveError(PatchDynError, RuntimeError):
    """A patch integration failed; carries the patch and step context."""

    def __init__(self, message, patch=None, step=None):
        self.patch = patch
        self.step = step
        super().__init__(message)


class ConfigParseError(PatchDynError, ValueError):
    """A run configuration file could not be parsed."""

    def __init__(self, message, line=None, key=None):
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class ConfigValidationError(PatchDynError, ValueError):
    """A run configuration violates a scheme invariant."""
