"""Exception types raised across the package."""


class EvigridError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(EvigridError, ValueError):
    """Two grids that must share a GridConfig do not."""


class LengthMismatch(EvigridError, ValueError):
    """A sequence or vector has the wrong length."""


class TotalConflict(EvigridError, ArithmeticError):
    """Dempster combination of two fully contradictory masses (K = 1)."""


class EmptyDataset(EvigridError, ValueError):
    pass


class AlignmentError(EvigridError, ValueError):
    """Predicted and ground-truth sequences do not line up."""


class InvalidSpec(EvigridError, ValueError):
    """A world specification cannot be simulated."""


class FormatError(EvigridError, ValueError):
    """Corrupt or unsupported on-disk data.

    ``offset`` is the byte offset at which decoding failed, when known.
    """

    def __init__(self, message, offset=None, path=None):
        self.offset = offset
        self.path = path
        parts = [message]
        if offset is not None:
            parts.append(f"at byte offset {offset}")
        if path is not None:
            parts.append(f"in {path}")
        super().__init__(" ".join(parts))


class IoError(EvigridError, OSError):
    """A filesystem operation failed (permissions, missing directory, full disk)."""
