"""Exception hierarchy shared by every humocc module."""


class HumoccError(Exception):
    """Base class for all library errors."""


class DegeneratePoseError(HumoccError):
    pass


class NoConvergenceError(HumoccError):
    pass


class NotPlanarError(HumoccError):
    pass


class MissingPoseError(HumoccError):
    pass


class UnlabeledPointsError(HumoccError):
    pass


class SpecMismatchError(HumoccError):
    pass


class OriginOutsideError(HumoccError):
    pass


class NonMonotonicTimeError(HumoccError):
    pass


class ShapeMismatchError(HumoccError):
    pass


class IndivisibleChannelsError(HumoccError):
    pass


class MalformedFileError(HumoccError):
    """A file on disk does not match its declared format.

    ``path`` names the offending file; ``offset`` is the byte offset at which
    parsing failed, when one is meaningful.
    """

    def __init__(self, path, message, offset=None):
        self.path = str(path)
        self.offset = offset
        where = f"{self.path}" if offset is None else f"{self.path} @ byte {offset}"
        super().__init__(f"{where}: {message}")


class VersionMismatchError(MalformedFileError):
    pass


class FrameError(HumoccError):
    """Wraps a failure raised while processing a single frame."""

    def __init__(self, frame_id, cause):
        self.frame_id = frame_id
        self.cause = cause
        super().__init__(f"frame {frame_id}: {type(cause).__name__}: {cause}")
