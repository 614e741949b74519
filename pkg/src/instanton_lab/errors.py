"""Exception types shared across the toolkit."""


class InstantonLabError(Exception):
    """Base class for all toolkit errors."""


class PoleAtOrigin(InstantonLabError):
    """A field with an r^-k pole was evaluated at (or too close to) the origin."""


class DomainViolation(InstantonLabError):
    """A finite-difference stencil left the domain of the field being differentiated."""


class NoConvergence(InstantonLabError):
    """An iterative solver failed to reach its tolerance.

    Carries the iteration trace in ``trace`` (list of (iteration, residual)).
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace or []


class NotPositiveDefinite(InstantonLabError):
    """A metric failed a Cholesky/positivity check at a stencil point."""


class OriginFrame(InstantonLabError):
    """Orthonormal frame requested at the origin, where the fibration degenerates."""


class NonFinite(InstantonLabError):
    """A sampled value was NaN/inf; carries the offending radius in ``radius``."""

    def __init__(self, message, radius=None):
        super().__init__(message)
        self.radius = radius


class SearchFailed(InstantonLabError):
    """Parameter search exhausted its ranges; carries ``best`` (best margin found)."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(InstantonLabError):
    """Bad CLI/suite configuration; carries ``key`` when the offending entry is known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class AxisFallback(UserWarning):
    """Closed-form expression bypassed on the z1*z2 = 0 locus; composition used instead."""
