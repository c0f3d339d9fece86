"""dqtrack: dual-quaternion 6-DOF visual target tracking toolkit."""

from . import camera, cli, config, dualquat, dynamics, observability, pnp, quat, scenario, ukf
from .errors import (
    ConfigError,
    CovarianceConditioningError,
    DegenerateConfigurationError,
    DegenerateStateError,
    DqtrackError,
    InitializationError,
    InnovationConditioningError,
    InsufficientMarkersError,
    InsufficientPointsError,
    PositiveDepthError,
)

__version__ = "0.1.0"
