"""Monoped parkour stack: terrain model, jump planner, simulator, service."""

from .leg import JointState, LegError, LegParams, Unreachable
from .terrain import (
    AddObstacle,
    AddRestrictedArea,
    CourseError,
    LandingInterval,
    MoveObstacle,
    Obstacle,
    OutOfExtent,
    Parkour,
    RemoveObstacle,
    RemoveRestrictedArea,
    RestrictedArea,
    UnknownId,
    apply_update,
    landing_intervals,
    locate,
    validate_parkour,
)

__version__ = "0.1.0"

__all__ = [
    "AddObstacle",
    "AddRestrictedArea",
    "CourseError",
    "JointState",
    "LandingInterval",
    "LegError",
    "LegParams",
    "MoveObstacle",
    "Obstacle",
    "OutOfExtent",
    "Parkour",
    "RemoveObstacle",
    "RemoveRestrictedArea",
    "RestrictedArea",
    "UnknownId",
    "Unreachable",
    "apply_update",
    "landing_intervals",
    "locate",
    "validate_parkour",
    "__version__",
]
