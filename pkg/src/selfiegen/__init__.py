"""Deterministic geometry and image-processing stages for building selfie-to-full-body
training data: undistortion pair rendering, selfie simulation, pose-reference
ranking, mask/edge targets, latent blending and augmentation sets."""

from . import _backend
from .errors import (DegenerateError, InsufficientDataError, InvalidInputError, NotFoundError,
                     SelfieGenError, SimulationFailure)

__version__ = "0.1.0"


def backend():
    """Name of the active kernel backend (``"cython"`` or ``"python"``)."""
    return _backend.name()


__all__ = [
    "DegenerateError", "InsufficientDataError", "InvalidInputError", "NotFoundError",
    "SelfieGenError", "SimulationFailure", "backend", "__version__",
]
