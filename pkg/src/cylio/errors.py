"""Exception types shared across the package."""


class CylioError(Exception):
    """Base class for all package-specific errors."""


class DegenerateInput(CylioError):
    """Input geometry does not determine the requested model (too few points,
    collinear/collocated data, rank-deficient covariance)."""


class NoConsensus(CylioError):
    """RANSAC failed to find a consensus set of the required size."""


class NonMonotoneTime(CylioError):
    """A time step or timestamp sequence was not strictly increasing."""


class TimeGap(CylioError):
    """A point timestamp has no bracketing IMU samples."""


class NotPSD(CylioError):
    """A covariance matrix failed its symmetry / positive-semidefinite check."""


class Diverged(CylioError):
    """The iterated filter update grew instead of converging."""


class SingularResidual(CylioError):
    """A measurement residual is undefined (point on the cylinder axis)."""


class NoOverlap(CylioError):
    """Two trajectories share too few associated poses to compare."""


class ConfigError(CylioError):
    """A run configuration failed validation; message carries the field path."""
