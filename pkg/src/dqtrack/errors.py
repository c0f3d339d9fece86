"""Exception types shared across the toolkit."""


class DqtrackError(Exception):
    """Base class for toolkit errors."""


class PositiveDepthError(DqtrackError):
    """A measurement or Jacobian was requested for a point at zero range
    or behind the camera."""


class InsufficientMarkersError(DqtrackError):
    """Fewer marker points than the operation requires."""


class InsufficientPointsError(DqtrackError):
    """Too few 2-D/3-D correspondences for a pose solution."""


class DegenerateConfigurationError(DqtrackError):
    """Point configuration (collinear or non-coplanar) admits no pose solution."""


class DegenerateStateError(DqtrackError):
    """A manifold state lost its structure (e.g. zero-norm rotation part)."""


class CovarianceConditioningError(DqtrackError):
    """Covariance factorization failed even after diagonal inflation."""


class InnovationConditioningError(DqtrackError):
    """Innovation covariance is singular; the update cannot be applied."""


class InitializationError(DqtrackError):
    """Filter initialization from the first measurement frame failed."""


class ConfigError(DqtrackError):
    """Scenario configuration is invalid; message carries the field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
