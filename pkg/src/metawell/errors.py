"""Exception types shared across the package."""


class MetawellError(Exception):
    """Base class for all package errors."""


class NonConvergence(MetawellError):
    """An iterative procedure (Newton search, gradient flow) failed to converge."""


class DegenerateHessian(MetawellError):
    """A Hessian eigenvalue fell below the degeneracy threshold (Morse violation)."""


class NoSeparatingSaddle(MetawellError):
    """No index-1 saddle separates the reference minimum from another basin."""


class InvalidTol(MetawellError):
    """A tolerance argument was non-positive."""


class OutOfRange(MetawellError):
    """An argument fell outside the supported range."""


class PatternViolation(MetawellError):
    """The harmonic bottom state is not located at the reference minimum."""


class PreconditionViolated(MetawellError):
    """A named hypothesis of a rate/optimization formula fails.

    The failing hypothesis name is stored in ``hypothesis``.
    """

    def __init__(self, hypothesis: str, detail: str = ""):
        self.hypothesis = hypothesis
        msg = f"hypothesis {hypothesis!r} violated"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class CapExceeded(MetawellError):
    """Too many coupled offsets for the dense optimizer search."""


class ZeroDensity(MetawellError):
    """The density factor vanishes at the minimum; the leading order breaks down."""


class ToleranceNotMet(MetawellError):
    """A quadrature or refinement loop hit its work cap before the tolerance."""


class EmptyDomain(MetawellError):
    """A discretized domain contains no interior node."""


class UnresolvedCut(MetawellError):
    """A half-space cut falls too close to its critical point for the grid."""


class NoConvergence(MetawellError):
    """Inverse power iteration hit its iteration cap."""


class HorizonExceeded(MetawellError):
    """A trajectory did not exit before the time horizon."""


class Extinction(MetawellError):
    """All Fleming-Viot replicas were absorbed in a single step."""


class InsufficientSurvivors(MetawellError):
    """Too few conditioned trajectories survive to estimate a distance."""


class ConfigError(MetawellError):
    """A configuration file or CLI argument is malformed."""
