"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """An argument violates a documented precondition."""


class SeedingFailureError(RuntimeError):
    """A candidate pool is too small to seed the requested tracks."""

    def __init__(self, message, frame_index=None):
        super().__init__(message)
        self.frame_index = frame_index


class DivergenceError(RuntimeError):
    """The joint optimization produced a non-finite loss."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class AlignmentError(RuntimeError):
    """Trajectory alignment is degenerate (too few or collinear points)."""


class TrackFileError(RuntimeError):
    """A track file is malformed or inconsistent."""


class BehindCameraError(RuntimeError):
    """A point required in front of the camera has non-positive view depth."""


class NumericalError(RuntimeError):
    """A numerically singular quantity was encountered."""
