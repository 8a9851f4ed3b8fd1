"""Exception hierarchy shared by every viewbias module."""


class ViewBiasError(Exception):
    """Base class; the CLI turns these into a nonzero exit code."""


class InvalidRecordError(ViewBiasError, ValueError):
    """Malformed pose record (wrong joint count, non-finite values, bad JSON)."""


class DegenerateSkeletonError(ViewBiasError, ValueError):
    """Skeleton has zero size and cannot be normalized."""


class BehindCameraError(ViewBiasError, ValueError):
    """A joint has non-positive depth."""


class DegenerateFrameError(ViewBiasError, ValueError):
    """Pelvis and shoulders do not span a plane, or the pelvis sits on the camera."""


class NotARotationError(ViewBiasError, ValueError):
    pass


class ZeroQuaternionError(ViewBiasError, ValueError):
    pass


class ClusteringError(ViewBiasError, ValueError):
    pass


class ConfigurationError(ViewBiasError, ValueError):
    """Inconsistent options (unknown profile, mode C without clusters, ...)."""


class ShapeMismatchError(ViewBiasError, ValueError):
    pass


class TrainingDivergedError(ViewBiasError, RuntimeError):
    pass
