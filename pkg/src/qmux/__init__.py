"""Single-photon multi-DOF entanglement distribution: exact simulation and rate analytics."""

from .errors import (
    ConfigurationError,
    InvariantViolation,
    LayoutError,
    PreconditionError,
    QmuxError,
)
from .noise import PhysicalParams

__all__ = [
    "ConfigurationError",
    "InvariantViolation",
    "LayoutError",
    "PhysicalParams",
    "PreconditionError",
    "QmuxError",
]

__version__ = "0.1.0"
