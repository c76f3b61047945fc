"""Exception types raised across the package."""


class SelfieGenError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SelfieGenError, ValueError):
    """Input violates a documented precondition."""


class DegenerateError(SelfieGenError, ValueError):
    """Geometry is singular: coincident points, singular matrix, projection at the camera centre."""


class InsufficientDataError(SelfieGenError, ValueError):
    """Not enough correspondences or samples to solve the problem."""


class NotFoundError(SelfieGenError, LookupError):
    """A required region or item is absent."""


class SimulationFailure(SelfieGenError):
    """Selfie simulation could not run for this image/part; the pair is skipped."""
